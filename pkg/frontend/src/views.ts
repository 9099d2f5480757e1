// Session views: streaming stat charts and the signaling sequence diagram.

import { AdminClient } from './api.js';
import { formatValue, lastValue, metricClamp, seriesExtent, toPath,
         downsample } from './charts.js';
import { inspector, toArrows } from './sequence.js';
import type { Arrow, Lane } from './sequence.js';
import { CHART_METRICS } from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';
const GEOMETRY = { width: 420, height: 120, padding: 10 };

export class StatsPlots {
  private paused = false;
  private timer: number | null = null;

  constructor(private readonly root: HTMLElement,
              private readonly client: AdminClient,
              private readonly intervalMs = 1000) {}

  watch(sessionId: string | null): void {
    if (this.timer !== null) window.clearInterval(this.timer);
    this.root.replaceChildren();
    if (!sessionId) {
      const hint = document.createElement('p');
      hint.textContent = 'select a session to see its charts';
      this.root.append(hint);
      return;
    }
    const pause = document.createElement('button');
    pause.textContent = 'Pause';
    pause.addEventListener('click', () => {
      this.paused = !this.paused;
      pause.textContent = this.paused ? 'Resume' : 'Pause';
    });
    this.root.append(pause);

    const charts = new Map<string, { svg: SVGSVGElement; path: SVGPathElement;
                                     caption: HTMLElement }>();
    for (const metric of CHART_METRICS) {
      const box = document.createElement('figure');
      box.className = 'chart';
      const caption = document.createElement('figcaption');
      caption.textContent = metric;
      const svg = document.createElementNS(SVG_NS, 'svg');
      svg.setAttribute('width', String(GEOMETRY.width));
      svg.setAttribute('height', String(GEOMETRY.height));
      const path = document.createElementNS(SVG_NS, 'path');
      path.setAttribute('fill', 'none');
      path.setAttribute('stroke', 'currentColor');
      svg.append(path);
      box.append(caption, svg);
      this.root.append(box);
      charts.set(metric, { svg, path, caption });
    }

    const refresh = async () => {
      if (this.paused) return;
      for (const metric of CHART_METRICS) {
        try {
          const series = await this.client.getSeries(sessionId, metric);
          const points = downsample(series.points, 200);
          const extent = seriesExtent(points, metricClamp(metric));
          const chart = charts.get(metric)!;
          chart.path.setAttribute('d', toPath(points, extent, GEOMETRY));
          const latest = lastValue(series.points);
          chart.caption.textContent = latest === null
            ? `${metric} (no data)` : `${metric}: ${formatValue(metric, latest)}`;
        } catch { /* session may not have stats yet */ }
      }
    };
    void refresh();
    this.timer = window.setInterval(refresh, this.intervalMs);
  }
}

const LANE_X: Record<Lane, number> = { client: 60, proxy: 260, upstream: 460 };

export class SequenceView {
  constructor(private readonly root: HTMLElement,
              private readonly client: AdminClient) {}

  async show(sessionId: string | null): Promise<void> {
    this.root.replaceChildren();
    if (!sessionId) return;
    const page = await this.client.getMessages(sessionId);
    const arrows = toArrows(page.messages);

    const header = document.createElement('p');
    header.textContent = `${arrows.length} messages` +
      (page.evicted ? ` (${page.evicted} evicted)` : '');
    this.root.append(header);

    const height = 40 + arrows.length * 26;
    const svg = document.createElementNS(SVG_NS, 'svg');
    svg.setAttribute('width', '540');
    svg.setAttribute('height', String(height));
    for (const lane of ['client', 'proxy', 'upstream'] as Lane[]) {
      const label = document.createElementNS(SVG_NS, 'text');
      label.setAttribute('x', String(LANE_X[lane]));
      label.setAttribute('y', '14');
      label.setAttribute('text-anchor', 'middle');
      label.textContent = lane;
      const line = document.createElementNS(SVG_NS, 'line');
      line.setAttribute('x1', String(LANE_X[lane]));
      line.setAttribute('x2', String(LANE_X[lane]));
      line.setAttribute('y1', '22');
      line.setAttribute('y2', String(height - 6));
      line.setAttribute('stroke', 'currentColor');
      line.setAttribute('stroke-opacity', '0.3');
      svg.append(label, line);
    }

    const detail = document.createElement('pre');
    detail.className = 'inspector';

    arrows.forEach((arrow, index) => {
      const y = 40 + index * 26;
      svg.append(this.arrowElement(arrow, y, detail));
    });
    this.root.append(svg, detail);
  }

  private arrowElement(arrow: Arrow, y: number, detail: HTMLElement): SVGGElement {
    const group = document.createElementNS(SVG_NS, 'g');
    const line = document.createElementNS(SVG_NS, 'line');
    line.setAttribute('x1', String(LANE_X[arrow.from]));
    line.setAttribute('x2', String(LANE_X[arrow.to]));
    line.setAttribute('y1', String(y));
    line.setAttribute('y2', String(y));
    line.setAttribute('stroke', 'currentColor');
    line.setAttribute('marker-end', 'url(#head)');
    if (arrow.dropped) line.setAttribute('stroke-dasharray', '4 3');

    const text = document.createElementNS(SVG_NS, 'text');
    text.setAttribute('x', String((LANE_X[arrow.from] + LANE_X[arrow.to]) / 2));
    text.setAttribute('y', String(y - 5));
    text.setAttribute('text-anchor', 'middle');
    text.setAttribute('font-size', '10');
    if (arrow.dropped) text.setAttribute('text-decoration', 'line-through');
    const badges = [arrow.dropped ? '✖' : '', arrow.modified ? '✎' : '']
      .filter(Boolean).join(' ');
    text.textContent = badges ? `${badges} ${arrow.label}` : arrow.label;

    group.append(line, text);
    if (arrow.modified) {
      group.addEventListener('click', () => {
        const pair = inspector(arrow);
        detail.textContent =
          `before: ${pair.before ?? '(unchanged)'}\nafter:  ${pair.after}`;
      });
      group.setAttribute('cursor', 'pointer');
    }
    return group;
  }
}
