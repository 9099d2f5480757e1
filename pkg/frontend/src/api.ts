// Typed client over the admin API. Every panel action is one documented
// call here; the UI owns no engine state of its own.

import type {
  CatalogEntry, CategorySpec, ControlEntry, ControlEvent, EngineSettings,
  MessagesPage, MetricSeries, Primitive, ScenarioRun, SessionInfo,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class AdminClient {
  constructor(
    private baseUrl: string = '',
    private token: string | null = null,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h['content-type'] = 'application/json';
    if (this.token) h['authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(body !== undefined),
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = await response.json();
        if (doc && typeof doc.detail === 'string') detail = doc.detail;
        else if (doc) detail = JSON.stringify(doc);
      } catch { /* non-JSON error body */ }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }

  // catalog -----------------------------------------------------------------

  getCatalog(category?: string): Promise<CatalogEntry[]> {
    const qs = category ? `?category=${encodeURIComponent(category)}` : '';
    return this.request('GET', `/api/catalog${qs}`);
  }

  // categories -----------------------------------------------------------------

  getCategories(): Promise<CategorySpec[]> {
    return this.request('GET', '/api/categories');
  }

  getCategory(id: string): Promise<CategorySpec> {
    return this.request('GET', `/api/categories/${id}`);
  }

  putCategory(id: string, spec: Omit<CategorySpec, 'category'>): Promise<{ handle: number }> {
    return this.request('PUT', `/api/categories/${id}`, spec);
  }

  deleteCategory(id: string): Promise<{ removed: boolean }> {
    return this.request('DELETE', `/api/categories/${id}`);
  }

  // controls -----------------------------------------------------------------

  getControls(): Promise<ControlEntry[]> {
    return this.request('GET', '/api/controls');
  }

  getControl(name: string): Promise<ControlEntry> {
    return this.request('GET', `/api/controls/${encodeURIComponent(name)}`);
  }

  putControl(name: string, value: Primitive): Promise<{ version: number }> {
    return this.request('PUT', `/api/controls/${encodeURIComponent(name)}`, { value });
  }

  deleteControl(name: string): Promise<{ removed: boolean }> {
    return this.request('DELETE', `/api/controls/${encodeURIComponent(name)}`);
  }

  triggerControl(name: string, payload: Primitive): Promise<{ delivered: number }> {
    return this.request('POST', `/api/controls/${encodeURIComponent(name)}/trigger`,
      { payload });
  }

  // sessions -----------------------------------------------------------------

  getSessions(): Promise<SessionInfo[]> {
    return this.request('GET', '/api/sessions');
  }

  getMessages(sessionId: string): Promise<MessagesPage> {
    return this.request('GET', `/api/sessions/${encodeURIComponent(sessionId)}/messages`);
  }

  getSeries(sessionId: string, metric: string, tFrom?: number, tTo?: number): Promise<MetricSeries> {
    const qs = new URLSearchParams({ metric });
    if (tFrom !== undefined) qs.set('t_from', String(tFrom));
    if (tTo !== undefined) qs.set('t_to', String(tTo));
    return this.request('GET',
      `/api/sessions/${encodeURIComponent(sessionId)}/stats?${qs}`);
  }

  // scenarios / settings ---------------------------------------------------------

  runScenario(doc: Record<string, unknown>): Promise<ScenarioRun> {
    return this.request('POST', '/api/scenarios/run', doc);
  }

  getSettings(): Promise<EngineSettings> {
    return this.request('GET', '/api/settings');
  }

  putSettings(settings: EngineSettings): Promise<EngineSettings> {
    return this.request('PUT', '/api/settings', settings);
  }

  // event stream -----------------------------------------------------------------

  /** Consume the server-push control feed. Uses fetch streaming (works in
   * browsers and node), parsing `data:` lines; returns when aborted. */
  async streamControls(onEvent: (event: ControlEvent) => void,
                       signal?: AbortSignal): Promise<void> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/controls/stream`, {
      headers: this.headers(),
      signal: signal ?? null,
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, 'control stream unavailable');
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) return;
        buffer += decoder.decode(value, { stream: true });
        let index;
        while ((index = buffer.indexOf('\n\n')) >= 0) {
          const frame = buffer.slice(0, index);
          buffer = buffer.slice(index + 2);
          for (const line of frame.split('\n')) {
            if (line.startsWith('data: ')) {
              onEvent(JSON.parse(line.slice('data: '.length)) as ControlEvent);
            }
          }
        }
      }
    } catch (err) {
      if (signal?.aborted) return;
      throw err;
    }
  }
}
