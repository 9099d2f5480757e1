// Message records -> sequence-diagram model with client / proxy / upstream
// lanes. Forwarded messages span the proxy; dropped or consumed ones die at
// it; synthesized replies originate from it.

import type { MessageRecord } from './types.js';

export type Lane = 'client' | 'proxy' | 'upstream';

export interface Arrow {
  from: Lane;
  to: Lane;
  t_ms: number;
  seq: number;
  label: string;
  modified: boolean;
  dropped: boolean;
  note: string;
  original?: string;   // pre-transform payload for the before/after inspector
  payload: string;
}

const LABEL_LIMIT = 48;

export function arrowLabel(record: MessageRecord): string {
  if (record.binary) return `${record.size} bytes`;
  const text = record.payload.replace(/\s+/g, ' ').trim();
  return text.length > LABEL_LIMIT ? `${text.slice(0, LABEL_LIMIT - 1)}…` : text;
}

export function toArrows(records: MessageRecord[]): Arrow[] {
  return records.map((record) => {
    const synthesized = record.note === 'synthesized reply';
    let from: Lane;
    let to: Lane;
    if (synthesized) {
      from = 'proxy';
      to = record.direction === 's2c' ? 'client' : 'upstream';
    } else if (record.direction === 'c2s') {
      from = 'client';
      to = record.dropped ? 'proxy' : 'upstream';
    } else {
      from = 'upstream';
      to = record.dropped ? 'proxy' : 'client';
    }
    return {
      from, to, t_ms: record.t_ms, seq: record.seq,
      label: arrowLabel(record),
      modified: record.modified, dropped: record.dropped, note: record.note,
      original: record.original, payload: record.payload,
    };
  });
}

export interface BeforeAfter {
  before: string | null;
  after: string;
}

export function inspector(arrow: Arrow): BeforeAfter {
  return { before: arrow.original ?? null, after: arrow.payload };
}
