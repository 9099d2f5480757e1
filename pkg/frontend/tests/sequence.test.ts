import { describe, expect, it } from 'vitest';

import { arrowLabel, inspector, toArrows } from '../src/sequence.js';
import type { MessageRecord } from '../src/types.js';

const record = (partial: Partial<MessageRecord>): MessageRecord => ({
  session_id: 'ws-1', direction: 'c2s', t_ms: 1, seq: 1, payload: 'hello',
  binary: false, size: 5, modified: false, dropped: false, note: '', ...partial,
});

describe('toArrows', () => {
  it('keeps time order and full spans for forwarded messages', () => {
    const arrows = toArrows([
      record({ seq: 1, t_ms: 1 }),
      record({ seq: 2, t_ms: 2, direction: 's2c', payload: 'ack' }),
      record({ seq: 3, t_ms: 3 }),
    ]);
    expect(arrows.map((a) => [a.from, a.to])).toEqual([
      ['client', 'upstream'], ['upstream', 'client'], ['client', 'upstream']]);
    expect(arrows.map((a) => a.seq)).toEqual([1, 2, 3]);
  });

  it('dropped messages die at the proxy lane with the badge flag', () => {
    const [arrow] = toArrows([record({ dropped: true })]);
    expect(arrow.to).toBe('proxy');
    expect(arrow.dropped).toBe(true);
  });

  it('synthesized replies originate at the proxy', () => {
    const [arrow] = toArrows([record({
      direction: 's2c', note: 'synthesized reply', modified: true })]);
    expect(arrow.from).toBe('proxy');
    expect(arrow.to).toBe('client');
  });

  it('modified messages expose before/after via the inspector', () => {
    const [arrow] = toArrows([record({
      modified: true, payload: 'HELLO', original: 'hello' })]);
    expect(arrow.modified).toBe(true);
    expect(inspector(arrow)).toEqual({ before: 'hello', after: 'HELLO' });
  });
});

describe('arrowLabel', () => {
  it('collapses whitespace and truncates long payloads', () => {
    const label = arrowLabel(record({ payload: `{ "a":\n  "${'x'.repeat(100)}" }` }));
    expect(label.length).toBeLessThanOrEqual(48);
    expect(label.includes('\n')).toBe(false);
  });

  it('binary payloads label by size', () => {
    expect(arrowLabel(record({ binary: true, size: 42 }))).toBe('42 bytes');
  });
});
