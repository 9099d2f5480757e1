// Category tabs: builtin selection + generated parameter form. Apply issues
// PUT /api/categories/{id}; clear issues DELETE; server validation errors
// render inline and change nothing.

import { AdminClient, ApiError } from './api.js';
import { collectParams, formModel, loadPresets, savePreset, ParamError } from './params.js';
import type { FormField, Preset } from './params.js';
import type { StorageLike } from './state.js';
import type { CatalogEntry, CategorySpec } from './types.js';

export class CategoryTab {
  private fields: FormField[] = [];
  private selected: CatalogEntry | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: AdminClient,
    private readonly category: string,
    private readonly entries: CatalogEntry[],
    private readonly storage: StorageLike,
    private readonly onApplied: () => void,
  ) {}

  async render(): Promise<void> {
    let installed: CategorySpec | null = null;
    try {
      installed = await this.client.getCategory(this.category);
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 404)) throw err;
    }
    this.root.replaceChildren();

    const select = document.createElement('select');
    select.append(new Option('(none)', ''));
    for (const entry of this.entries) {
      const option = new Option(
        entry.strict_safe ? entry.name : `${entry.name} (not strict-safe)`,
        entry.name, false, installed?.builtin === entry.name);
      select.append(option);
    }
    this.root.append(select);

    const description = document.createElement('p');
    description.className = 'description';
    const form = document.createElement('div');
    form.className = 'param-form';
    const error = document.createElement('p');
    error.className = 'error';
    const buttons = document.createElement('div');
    buttons.className = 'buttons';
    this.root.append(description, form, error, buttons);

    const renderForm = () => {
      form.replaceChildren();
      error.textContent = '';
      this.selected = this.entries.find((e) => e.name === select.value) ?? null;
      description.textContent = this.selected?.description ?? '';
      if (!this.selected) {
        this.fields = [];
        return;
      }
      this.fields = formModel(this.selected,
        installed?.builtin === this.selected.name ? installed.params : undefined);
      for (const field of this.fields) {
        const row = document.createElement('label');
        row.textContent = `${field.param.name}${field.param.required ? ' *' : ''} `;
        let input: HTMLInputElement | HTMLSelectElement;
        if (field.param.type === 'enum' || field.param.type === 'boolean') {
          input = document.createElement('select');
          const choices = field.param.type === 'boolean'
            ? ['', 'true', 'false'] : ['', ...(field.param.choices ?? [])];
          for (const choice of choices) {
            input.append(new Option(choice || '(unset)', choice,
              false, field.value === choice));
          }
        } else {
          input = document.createElement('input');
          input.value = field.value;
        }
        input.addEventListener('change', () => { field.value = input.value; });
        row.append(input);
        form.append(row);
      }
    };
    select.addEventListener('change', renderForm);
    renderForm();

    const apply = document.createElement('button');
    apply.textContent = 'Apply';
    apply.addEventListener('click', async () => {
      error.textContent = '';
      if (!this.selected) return;
      try {
        const params = collectParams(this.fields);
        await this.client.putCategory(this.category, {
          builtin: this.selected.name, params, requested: [], enabled: true,
        });
        this.onApplied();
      } catch (err) {
        error.textContent = err instanceof ParamError || err instanceof ApiError
          ? err.message : String(err);
      }
    });

    const clear = document.createElement('button');
    clear.textContent = 'Clear';
    clear.addEventListener('click', async () => {
      await this.client.deleteCategory(this.category);
      select.value = '';
      renderForm();
      this.onApplied();
    });

    const presetButton = document.createElement('button');
    presetButton.textContent = 'Save preset';
    presetButton.addEventListener('click', () => {
      if (!this.selected) return;
      try {
        const params = collectParams(this.fields);
        const name = window.prompt('Preset name:', this.selected.name);
        if (!name) return;
        savePreset(this.storage, {
          name, category: this.category, builtin: this.selected.name, params,
        });
        renderPresets();
      } catch (err) {
        error.textContent = String(err instanceof Error ? err.message : err);
      }
    });

    buttons.append(apply, clear, presetButton);

    const presetList = document.createElement('div');
    presetList.className = 'presets';
    this.root.append(presetList);
    const renderPresets = () => {
      presetList.replaceChildren();
      const presets = loadPresets(this.storage)
        .filter((p: Preset) => p.category === this.category);
      for (const preset of presets) {
        const chip = document.createElement('button');
        chip.className = 'preset';
        chip.textContent = preset.name;
        chip.addEventListener('click', () => {
          select.value = preset.builtin;
          renderForm();
          for (const field of this.fields) {
            const value = preset.params[field.param.name];
            if (value !== undefined) field.value = String(value);
          }
          renderForm0Values(form, this.fields);
        });
        presetList.append(chip);
      }
    };
    renderPresets();
  }
}

function renderForm0Values(form: HTMLElement, fields: FormField[]): void {
  const inputs = form.querySelectorAll('input, select');
  fields.forEach((field, i) => {
    const input = inputs[i] as HTMLInputElement | HTMLSelectElement | undefined;
    if (input) input.value = field.value;
  });
}
