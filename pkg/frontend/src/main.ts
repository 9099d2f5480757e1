// Panel assembly: category tabs, controls editor, session views, settings.
// The panel is stateless with respect to the engine; closing it changes
// nothing server-side.

import { AdminClient } from './api.js';
import { ControlsPanel } from './controls.js';
import { loadSettings, saveSettings } from './state.js';
import type { PanelSettings } from './state.js';
import { CategoryTab } from './tabs.js';
import { SequenceView, StatsPlots } from './views.js';
import type { CatalogEntry } from './types.js';

async function boot(): Promise<void> {
  const client = new AdminClient('');
  const storage = window.localStorage;
  const settings = loadSettings(storage);
  applyCosmetics(settings);

  const tabBar = document.getElementById('tab-bar')!;
  const tabBody = document.getElementById('tab-body')!;
  const catalog = await client.getCatalog();
  const byCategory = new Map<string, CatalogEntry[]>();
  for (const entry of catalog) {
    const list = byCategory.get(entry.category) ?? [];
    list.push(entry);
    byCategory.set(entry.category, list);
  }

  const controlsPanel = new ControlsPanel(
    document.getElementById('controls-body')!, client);
  await controlsPanel.start();

  const plots = new StatsPlots(document.getElementById('charts-body')!, client);
  const sequence = new SequenceView(document.getElementById('sequence-body')!, client);

  const sessionSelect = document.getElementById('session-select') as HTMLSelectElement;
  const refreshSessions = async () => {
    const sessions = await client.getSessions();
    const current = sessionSelect.value;
    sessionSelect.replaceChildren(new Option('(select session)', ''));
    for (const session of sessions) {
      sessionSelect.append(new Option(`${session.id} [${session.kind}]`,
        session.id, false, session.id === current));
    }
  };
  sessionSelect.addEventListener('change', () => {
    plots.watch(sessionSelect.value || null);
    void sequence.show(sessionSelect.value || null);
  });
  document.getElementById('refresh-sessions')!
    .addEventListener('click', () => void refreshSessions());
  await refreshSessions();

  let active = '';
  const showTab = async (category: string) => {
    active = category;
    for (const button of tabBar.querySelectorAll('button')) {
      button.classList.toggle('active', button.textContent === category);
    }
    tabBody.replaceChildren();
    const host = document.createElement('div');
    tabBody.append(host);
    const tab = new CategoryTab(host, client, category,
      byCategory.get(category) ?? [], storage, () => void showTab(category));
    await tab.render();
  };

  for (const category of settings.tabs) {
    if (!byCategory.has(category)) continue;
    const button = document.createElement('button');
    button.textContent = category;
    button.addEventListener('click', () => void showTab(category));
    tabBar.append(button);
  }
  if (settings.tabs.length) void showTab(settings.tabs[0]);

  wireSettings(settings, storage);
  void active;
}

function applyCosmetics(settings: PanelSettings): void {
  document.body.dataset.theme = settings.theme;
  document.body.dataset.fontSize = settings.fontSize;
}

function wireSettings(settings: PanelSettings, storage: Storage): void {
  const theme = document.getElementById('theme-select') as HTMLSelectElement;
  theme.value = settings.theme;
  theme.addEventListener('change', () => {
    settings.theme = theme.value === 'dark' ? 'dark' : 'light';
    saveSettings(storage, settings);
    applyCosmetics(settings);
  });
  const fontSize = document.getElementById('fontsize-select') as HTMLSelectElement;
  fontSize.value = settings.fontSize;
  fontSize.addEventListener('change', () => {
    settings.fontSize = fontSize.value as PanelSettings['fontSize'];
    saveSettings(storage, settings);
    applyCosmetics(settings);
  });
}

void boot();
