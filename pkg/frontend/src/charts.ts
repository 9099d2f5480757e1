// Streaming line charts as plain SVG paths; all math pure and testable.

import type { SeriesPoint } from './types.js';

export interface ChartGeometry {
  width: number;
  height: number;
  padding: number;
}

export interface Extent {
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

export function seriesExtent(points: SeriesPoint[],
                             clamp?: { vMin?: number; vMax?: number }): Extent {
  if (points.length === 0) {
    return { tMin: 0, tMax: 1, vMin: clamp?.vMin ?? 0, vMax: clamp?.vMax ?? 1 };
  }
  let tMin = points[0][0], tMax = points[0][0];
  let vMin = points[0][1], vMax = points[0][1];
  for (const [t, v] of points) {
    tMin = Math.min(tMin, t); tMax = Math.max(tMax, t);
    vMin = Math.min(vMin, v); vMax = Math.max(vMax, v);
  }
  if (clamp?.vMin !== undefined) vMin = clamp.vMin;
  if (clamp?.vMax !== undefined) vMax = clamp.vMax;
  if (tMax === tMin) tMax = tMin + 1;
  if (vMax === vMin) vMax = vMin + 1;
  return { tMin, tMax, vMin, vMax };
}

export function project(point: SeriesPoint, extent: Extent,
                        geometry: ChartGeometry): [number, number] {
  const { width, height, padding } = geometry;
  const x = padding + ((point[0] - extent.tMin) / (extent.tMax - extent.tMin))
    * (width - 2 * padding);
  const y = height - padding - ((point[1] - extent.vMin) / (extent.vMax - extent.vMin))
    * (height - 2 * padding);
  return [x, y];
}

export function toPath(points: SeriesPoint[], extent: Extent,
                       geometry: ChartGeometry): string {
  if (points.length === 0) return '';
  return points.map((p, i) => {
    const [x, y] = project(p, extent, geometry);
    return `${i === 0 ? 'M' : 'L'}${x.toFixed(1)},${y.toFixed(1)}`;
  }).join(' ');
}

/** Keep at most maxPoints by striding; first and last always survive. */
export function downsample(points: SeriesPoint[], maxPoints: number): SeriesPoint[] {
  if (points.length <= maxPoints || maxPoints < 2) return points;
  const stride = (points.length - 1) / (maxPoints - 1);
  const out: SeriesPoint[] = [];
  for (let i = 0; i < maxPoints; i++) {
    out.push(points[Math.round(i * stride)]);
  }
  return out;
}

export function lastValue(points: SeriesPoint[]): number | null {
  return points.length ? points[points.length - 1][1] : null;
}

export function meanValue(points: SeriesPoint[]): number | null {
  if (!points.length) return null;
  return points.reduce((acc, [, v]) => acc + v, 0) / points.length;
}

/** Fixed axis bounds for score charts; everything else autoscale. */
export function metricClamp(metric: string): { vMin?: number; vMax?: number } | undefined {
  if (metric === 'mos') return { vMin: 1, vMax: 4.5 };
  if (metric === 'packet_loss_rate') return { vMin: 0, vMax: 1 };
  return undefined;
}

export function formatValue(metric: string, value: number): string {
  if (metric.endsWith('_bps')) return `${(value / 1000).toFixed(1)} kbps`;
  if (metric === 'packet_loss_rate') return `${(value * 100).toFixed(2)} %`;
  if (metric.endsWith('_ms')) return `${value.toFixed(1)} ms`;
  return value.toFixed(3);
}
