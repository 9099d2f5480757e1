import { describe, expect, it } from 'vitest';

import { collectParams, deletePreset, formModel, loadPresets, ParamError,
         savePreset } from '../src/params.js';
import type { CatalogEntry } from '../src/types.js';

const PREFER_CODEC: CatalogEntry = {
  category: 'Session', name: 'prefer_codec', description: 'd', strict_safe: true,
  requires: [],
  params: [
    { name: 'kind', type: 'enum', default: null, required: true,
      choices: ['audio', 'video'] },
    { name: 'codec', type: 'string', default: null, required: true },
  ],
};

const BANDWIDTH: CatalogEntry = {
  category: 'Session', name: 'set_receiver_bandwidth', description: 'd',
  strict_safe: true, requires: [],
  params: [
    { name: 'kind', type: 'enum', default: null, required: true,
      choices: ['audio', 'video'] },
    { name: 'kbps', type: 'number', default: null, required: true, minimum: 1 },
  ],
};

describe('formModel', () => {
  it('prefills defaults and existing values', () => {
    const entry: CatalogEntry = {
      ...PREFER_CODEC,
      params: [{ name: 'threshold', type: 'number', default: 75, required: false }],
    };
    expect(formModel(entry)[0].value).toBe('75');
    expect(formModel(entry, { threshold: 90 })[0].value).toBe('90');
  });
});

describe('collectParams', () => {
  it('coerces by declared type', () => {
    const fields = formModel(BANDWIDTH);
    fields[0].value = 'video';
    fields[1].value = '256';
    expect(collectParams(fields)).toEqual({ kind: 'video', kbps: 256 });
  });

  it('rejects out-of-range numbers (the kbps=0 inline error)', () => {
    const fields = formModel(BANDWIDTH);
    fields[0].value = 'video';
    fields[1].value = '0';
    expect(() => collectParams(fields)).toThrow(ParamError);
    expect(() => collectParams(fields)).toThrow(/kbps/);
  });

  it('rejects bad enums and missing required fields', () => {
    const fields = formModel(PREFER_CODEC);
    fields[0].value = 'smell';
    fields[1].value = 'PCMU';
    expect(() => collectParams(fields)).toThrow(/kind/);
    fields[0].value = 'audio';
    fields[1].value = '';
    expect(() => collectParams(fields)).toThrow(/codec/);
  });

  it('omits optional empties', () => {
    const entry: CatalogEntry = {
      ...PREFER_CODEC,
      params: [{ name: 'sink', type: 'string', default: null, required: false }],
    };
    expect(collectParams(formModel(entry))).toEqual({});
  });
});

describe('presets', () => {
  const memoryStorage = () => {
    const map = new Map<string, string>();
    return {
      getItem: (k: string) => map.get(k) ?? null,
      setItem: (k: string, v: string) => void map.set(k, v),
    };
  };

  it('saves, replaces and deletes by (category, name)', () => {
    const storage = memoryStorage();
    savePreset(storage, { name: 'pcmu', category: 'Session',
      builtin: 'prefer_codec', params: { kind: 'audio', codec: 'PCMU' } });
    savePreset(storage, { name: 'pcmu', category: 'Session',
      builtin: 'prefer_codec', params: { kind: 'audio', codec: 'PCMA' } });
    const presets = loadPresets(storage);
    expect(presets).toHaveLength(1);
    expect(presets[0].params.codec).toBe('PCMA');
    expect(deletePreset(storage, 'Session', 'pcmu')).toHaveLength(0);
  });
});
