// Parameter forms generated from the catalog schema, plus client-side
// presets (the panel's replacement for named scripts: a preset is a builtin
// plus its parameter values, saved locally).

import type { CatalogEntry, CatalogParam, Primitive } from './types.js';
import type { StorageLike } from './state.js';

export interface FormField {
  param: CatalogParam;
  value: string;          // raw editor value
}

export function formModel(entry: CatalogEntry,
                          existing?: Record<string, Primitive>): FormField[] {
  return entry.params.map((param) => {
    const current = existing?.[param.name] ?? param.default;
    return { param, value: current === null || current === undefined ? '' : String(current) };
  });
}

export class ParamError extends Error {
  constructor(public param: string, message: string) {
    super(message);
  }
}

export function coerceField(field: FormField): Primitive | undefined {
  const { param } = field;
  const raw = field.value.trim();
  if (raw === '') {
    if (param.required) throw new ParamError(param.name, `${param.name} is required`);
    return undefined;
  }
  switch (param.type) {
    case 'number': {
      const value = Number(raw);
      if (!Number.isFinite(value)) {
        throw new ParamError(param.name, `${param.name} must be a number`);
      }
      if (param.minimum !== undefined && value < param.minimum) {
        throw new ParamError(param.name, `${param.name} must be >= ${param.minimum}`);
      }
      if (param.maximum !== undefined && value > param.maximum) {
        throw new ParamError(param.name, `${param.name} must be <= ${param.maximum}`);
      }
      return value;
    }
    case 'boolean': {
      if (raw === 'true') return true;
      if (raw === 'false') return false;
      throw new ParamError(param.name, `${param.name} must be true or false`);
    }
    case 'enum': {
      if (!param.choices?.includes(raw)) {
        throw new ParamError(param.name,
          `${param.name} must be one of ${param.choices?.join(', ')}`);
      }
      return raw;
    }
    default:
      return raw;
  }
}

/** Collect the params document; throws ParamError on first invalid field. */
export function collectParams(fields: FormField[]): Record<string, Primitive> {
  const out: Record<string, Primitive> = {};
  for (const field of fields) {
    const value = coerceField(field);
    if (value !== undefined) out[field.param.name] = value;
  }
  return out;
}

// -- presets ----------------------------------------------------------------

export interface Preset {
  name: string;
  category: string;
  builtin: string;
  params: Record<string, Primitive>;
}

const PRESETS_KEY = 'rtcwrench.panel.presets';

export function loadPresets(storage: StorageLike): Preset[] {
  const raw = storage.getItem(PRESETS_KEY);
  if (!raw) return [];
  try {
    const doc = JSON.parse(raw);
    return Array.isArray(doc) ? (doc as Preset[]) : [];
  } catch {
    return [];
  }
}

export function savePreset(storage: StorageLike, preset: Preset): Preset[] {
  const presets = loadPresets(storage)
    .filter((p) => !(p.name === preset.name && p.category === preset.category));
  presets.push(preset);
  storage.setItem(PRESETS_KEY, JSON.stringify(presets));
  return presets;
}

export function deletePreset(storage: StorageLike, category: string,
                             name: string): Preset[] {
  const presets = loadPresets(storage)
    .filter((p) => !(p.name === name && p.category === category));
  storage.setItem(PRESETS_KEY, JSON.stringify(presets));
  return presets;
}
