// Wire types mirroring the admin API.

export type Primitive = string | number | boolean;

export interface CatalogParam {
  name: string;
  type: 'string' | 'number' | 'boolean' | 'enum';
  default: Primitive | null;
  required: boolean;
  minimum?: number;
  maximum?: number;
  choices?: string[];
  description?: string;
}

export interface CatalogEntry {
  category: string;
  name: string;
  description: string;
  params: CatalogParam[];
  strict_safe: boolean;
  requires: string[];
}

export interface CategorySpec {
  category: string;
  builtin: string;
  params: Record<string, Primitive>;
  requested: string[];
  enabled: boolean;
}

export interface ControlEntry {
  name: string;
  value: Primitive;
  version: number;
  updated_at: number;
}

export interface ControlEvent {
  name: string;
  kind: 'updated' | 'deleted' | 'triggered';
  old_value: Primitive | null;
  new_value: Primitive | null;
  version: number;
}

export type SeriesPoint = [number, number];

export interface MetricSeries {
  name: string;
  unit: string;
  points: SeriesPoint[];
}

export interface SessionInfo {
  id: string;
  kind: 'proxy' | 'stats';
  detail: Record<string, unknown>;
}

export interface MessageRecord {
  session_id: string;
  direction: 'c2s' | 's2c';
  t_ms: number;
  seq: number;
  payload: string;
  binary: boolean;
  size: number;
  modified: boolean;
  dropped: boolean;
  note: string;
  original?: string;
}

export interface MessagesPage {
  session_id: string;
  evicted: number;
  messages: MessageRecord[];
}

export interface EngineSettings {
  strict: boolean;
  stats_interval_ms: number;
  savestats_sink: string | null;
  seed: number | null;
}

export interface ScenarioRun {
  name: string;
  connection_id: string;
  error: { step: number; cause: string } | null;
  events: number;
  transcript: Record<string, unknown>[];
}

export const CATEGORIES = [
  'Media', 'Devices', 'Session', 'Connect', 'Network', 'Stats',
  'Data', 'Socket', 'Request', 'Security', 'Cpu',
] as const;

export const CHART_METRICS = [
  'recv_bitrate_bps', 'send_bitrate_bps', 'packet_loss_rate',
  'jitter_ms', 'rtt_ms', 'mos',
] as const;
