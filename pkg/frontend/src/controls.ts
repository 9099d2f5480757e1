// Live controls table: edits PUT, trigger buttons POST, remote changes
// arrive over the event stream and render in version order.

import { AdminClient } from './api.js';
import { ControlsTableState } from './state.js';
import type { Primitive } from './types.js';

function parseValue(raw: string): Primitive {
  const trimmed = raw.trim();
  if (trimmed === 'true') return true;
  if (trimmed === 'false') return false;
  const asNumber = Number(trimmed);
  if (trimmed !== '' && Number.isFinite(asNumber)) return asNumber;
  return raw;
}

export class ControlsPanel {
  readonly state = new ControlsTableState();
  private status: HTMLElement | null = null;

  constructor(private readonly root: HTMLElement,
              private readonly client: AdminClient) {}

  async start(): Promise<void> {
    this.state.seed(await this.client.getControls());
    this.render();
    void this.client.streamControls((event) => {
      if (this.state.apply(event)) this.render();
    }).catch(() => {
      if (this.status) this.status.textContent = 'event stream disconnected';
    });
  }

  render(): void {
    this.root.replaceChildren();

    const addRow = document.createElement('div');
    addRow.className = 'control-add';
    const nameInput = document.createElement('input');
    nameInput.placeholder = 'control name';
    const valueInput = document.createElement('input');
    valueInput.placeholder = 'value';
    const setButton = document.createElement('button');
    setButton.textContent = 'Set';
    setButton.addEventListener('click', async () => {
      if (nameInput.value) {
        await this.client.putControl(nameInput.value, parseValue(valueInput.value));
      }
    });
    addRow.append(nameInput, valueInput, setButton);

    const table = document.createElement('table');
    table.className = 'controls';
    const head = table.insertRow();
    for (const title of ['name', 'value', 'version', '']) {
      const cell = document.createElement('th');
      cell.textContent = title;
      head.append(cell);
    }

    for (const row of this.state.list()) {
      const tr = table.insertRow();
      tr.insertCell().textContent = row.name;

      const valueCell = tr.insertCell();
      const editor = document.createElement('input');
      editor.value = row.deleted ? '' : String(row.value);
      editor.addEventListener('change', async () => {
        await this.client.putControl(row.name, parseValue(editor.value));
      });
      valueCell.append(editor);
      if (row.lastTriggered !== null) {
        const flash = document.createElement('span');
        flash.className = 'triggered';
        flash.textContent = ` ⚡ ${String(row.lastTriggered)}`;
        valueCell.append(flash);
      }

      tr.insertCell().textContent = String(row.version);

      const actions = tr.insertCell();
      const trigger = document.createElement('button');
      trigger.textContent = 'Trigger';
      trigger.addEventListener('click', async () => {
        const { delivered } = await this.client.triggerControl(
          row.name, row.deleted ? true : row.value ?? true);
        if (this.status) this.status.textContent = `delivered to ${delivered}`;
      });
      const remove = document.createElement('button');
      remove.textContent = 'Delete';
      remove.addEventListener('click', () => this.client.deleteControl(row.name));
      actions.append(trigger, remove);
    }

    this.status = document.createElement('p');
    this.status.className = 'status';
    this.root.append(addRow, table, this.status);
  }
}
