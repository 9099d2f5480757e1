// Panel state. The controls table enforces event-order fidelity: a value at
// version n is never shown after version m > n has been displayed for the
// same name; stale events are discarded, not applied.

import type { ControlEntry, ControlEvent, Primitive } from './types.js';

export interface ControlRow {
  name: string;
  value: Primitive | null;
  version: number;
  deleted: boolean;
  lastTriggered: Primitive | null;
}

export class ControlsTableState {
  private rows = new Map<string, ControlRow>();

  seed(entries: ControlEntry[]): void {
    for (const entry of entries) {
      const known = this.rows.get(entry.name);
      if (known && known.version > entry.version) continue;
      this.rows.set(entry.name, {
        name: entry.name, value: entry.value, version: entry.version,
        deleted: false, lastTriggered: known?.lastTriggered ?? null,
      });
    }
  }

  /** Apply one bus event; returns false when it was stale and discarded. */
  apply(event: ControlEvent): boolean {
    const known = this.rows.get(event.name);
    if (event.kind === 'triggered') {
      // triggers carry no state change; surface the payload only
      const row = known ?? {
        name: event.name, value: null, version: event.version,
        deleted: true, lastTriggered: null,
      };
      row.lastTriggered = event.new_value;
      this.rows.set(event.name, row);
      return true;
    }
    if (known && event.version < known.version) return false;       // stale
    if (known && event.version === known.version && event.kind === 'updated'
        && !known.deleted) return false;                            // replay
    if (event.kind === 'updated') {
      this.rows.set(event.name, {
        name: event.name, value: event.new_value, version: event.version,
        deleted: false, lastTriggered: known?.lastTriggered ?? null,
      });
    } else {
      this.rows.set(event.name, {
        name: event.name, value: null, version: event.version,
        deleted: true, lastTriggered: known?.lastTriggered ?? null,
      });
    }
    return true;
  }

  get(name: string): ControlRow | undefined {
    return this.rows.get(name);
  }

  list(): ControlRow[] {
    return [...this.rows.values()].sort((a, b) => a.name.localeCompare(b.name));
  }
}

export type Theme = 'light' | 'dark';

export interface PanelSettings {
  theme: Theme;
  tabs: string[];        // which category tabs show, and in what order
  fontSize: 'small' | 'medium' | 'large';
}

export const DEFAULT_SETTINGS: PanelSettings = {
  theme: 'light',
  tabs: ['Session', 'Network', 'Connect', 'Media', 'Devices', 'Stats',
         'Data', 'Socket', 'Request', 'Security', 'Cpu'],
  fontSize: 'small',
};

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const SETTINGS_KEY = 'rtcwrench.panel.settings';

export function loadSettings(storage: StorageLike): PanelSettings {
  const raw = storage.getItem(SETTINGS_KEY);
  if (!raw) return { ...DEFAULT_SETTINGS, tabs: [...DEFAULT_SETTINGS.tabs] };
  try {
    const doc = JSON.parse(raw) as Partial<PanelSettings>;
    return {
      theme: doc.theme === 'dark' ? 'dark' : 'light',
      tabs: Array.isArray(doc.tabs) && doc.tabs.length > 0
        ? doc.tabs.filter((t): t is string => typeof t === 'string')
        : [...DEFAULT_SETTINGS.tabs],
      fontSize: doc.fontSize === 'medium' || doc.fontSize === 'large'
        ? doc.fontSize : 'small',
    };
  } catch {
    return { ...DEFAULT_SETTINGS, tabs: [...DEFAULT_SETTINGS.tabs] };
  }
}

export function saveSettings(storage: StorageLike, settings: PanelSettings): void {
  storage.setItem(SETTINGS_KEY, JSON.stringify(settings));
}
