/** DOM wiring for the operator console. Rendering is a pure function of the
 * latest REST responses; the server is the single source of truth. */

import { ApiError, GatewayClient } from './api.js';
import { EventPoller } from './events.js';
import type { ChainEvent, InstanceView, WorklistItem } from './types.js';
import { loadWorklist, submitCompletion } from './worklist.js';

const REFRESH_MS = 2000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

class Console {
  private client: GatewayClient;
  private selected: WorklistItem | null = null;
  private viewed: string | null = null;
  private poller: EventPoller | null = null;
  private timeline: ChainEvent[] = [];
  private inFlight = false;

  constructor(base: string) {
    this.client = new GatewayClient(base);
  }

  start(): void {
    void this.refresh();
    setInterval(() => void this.refresh(), REFRESH_MS);
  }

  private async refresh(): Promise<void> {
    try {
      const items = await loadWorklist(this.client);
      this.renderWorklist(items);
      must('banner').classList.add('hidden');
      if (this.viewed) await this.renderInstance(this.viewed);
    } catch (err) {
      this.showBanner(`gateway unreachable: ${err instanceof Error ? err.message : err}`, 'error');
      this.renderWorklist([]);
    }
  }

  private showBanner(message: string, kind: 'error' | 'abort' | 'ok'): void {
    const banner = must('banner');
    banner.textContent = message;
    banner.className = `banner ${kind}`;
  }

  private renderWorklist(items: WorklistItem[]): void {
    const list = must('worklist');
    list.replaceChildren();
    if (!items.length) {
      list.append(el('li', 'empty', 'no enabled tasks'));
      return;
    }
    for (const item of items) {
      const li = el('li', 'task');
      const button = el('button', 'pick', `${item.name} (${item.task})`);
      button.addEventListener('click', () => this.select(item));
      li.append(button, el('span', 'meta', item.instance));
      list.append(li);
    }
  }

  private select(item: WorklistItem): void {
    this.selected = item;
    this.watch(item.instance);
    const form = must('taskform');
    form.replaceChildren();
    form.append(el('h3', undefined, `${item.name} — ${item.instance}`));

    const hint = item.binding.required_params.length
      ? `fields expected on-chain: ${item.binding.required_params.join(', ')}`
      : 'no fields required';
    form.append(el('p', 'hint', hint));
    if (item.binding.documents_expected.length) {
      form.append(el('p', 'hint', `documents produced: ${item.binding.documents_expected.join(', ')}`));
    }
    if (item.binding.url) {
      form.append(el('p', 'hint', `service call: ${item.binding.url}`));
    }

    const paramsBox = el('div', 'params');
    for (const name of item.binding.required_params) {
      const row = el('div', 'row');
      const label = el('label', undefined, name);
      const input = el('input');
      input.name = name;
      input.placeholder = 'leave blank to rely on documents';
      row.append(label, input);
      paramsBox.append(row);
    }
    form.append(paramsBox);

    const files = el('input');
    files.type = 'file';
    files.multiple = true;
    form.append(files);

    const submit = el('button', 'submit', 'complete task');
    const status = el('p', 'status');
    submit.addEventListener('click', () => void this.submit(item, paramsBox, files, submit, status));
    form.append(submit, status);
  }

  private async submit(
    item: WorklistItem,
    paramsBox: HTMLElement,
    files: HTMLInputElement,
    submit: HTMLButtonElement,
    status: HTMLElement,
  ): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    submit.disabled = true;
    status.textContent = 'submitting…';
    const params: Record<string, unknown> = {};
    for (const input of paramsBox.querySelectorAll('input')) {
      if (!input.value) continue;
      const raw = input.value;
      if (raw === 'true' || raw === 'false') params[input.name] = raw === 'true';
      else if (raw !== '' && !Number.isNaN(Number(raw))) params[input.name] = Number(raw);
      else params[input.name] = raw;
    }
    const outcome = await submitCompletion(this.client, item, {
      params,
      files: Array.from(files.files ?? []),
    });
    this.inFlight = false;
    if (outcome.kind === 'completed') {
      status.textContent = outcome.decision
        ? `done — decision outcome: ${outcome.decision}`
        : 'done';
      if (outcome.aborted) this.showBanner('instance ABORTED — see compensation events', 'abort');
      else if (outcome.decision) this.showBanner(`decision: ${outcome.decision}`, 'ok');
    } else if (outcome.kind === 'not_enabled') {
      status.textContent = `task no longer enabled: ${outcome.message}`;
    } else {
      submit.disabled = false;
      status.textContent = `${outcome.code}: ${outcome.message}`;
      return;
    }
    await this.refresh();
  }

  private watch(instanceId: string): void {
    if (this.viewed === instanceId) return;
    this.viewed = instanceId;
    this.timeline = [];
    this.poller?.stop();
    this.poller = new EventPoller(this.client, instanceId, (event) => {
      this.timeline.push(event);
      if (event.name === 'InstanceAborted') {
        this.showBanner('instance ABORTED — compensation required', 'abort');
      }
      this.renderTimeline();
    });
    this.poller.start();
    void this.renderInstance(instanceId);
  }

  private async renderInstance(instanceId: string): Promise<void> {
    const view: InstanceView = await this.client.instance(instanceId);
    const box = must('instance');
    box.replaceChildren();
    box.append(el('h3', undefined, `${view.instance} — ${view.status}`));
    box.append(el('p', 'meta', `contract ${view.contract.slice(0, 18)}…`));
    box.append(el('p', undefined, `completed: ${view.completed_tasks.join(' → ') || '(none)'}`));
    box.append(el('p', undefined, `enabled: ${view.enabled_tasks.join(', ') || '(none)'}`));

    const vars = el('table', 'vars');
    for (const [name, value] of Object.entries(view.variables)) {
      const row = el('tr');
      row.append(el('td', undefined, name), el('td', undefined, String(value)));
      vars.append(row);
    }
    box.append(vars);

    const docs = el('ul', 'docs');
    for (const doc of view.documents) {
      docs.append(el('li', undefined, `${doc.task}: ${doc.cid.slice(0, 24)}… by ${doc.signer}`));
    }
    box.append(docs);
  }

  private renderTimeline(): void {
    const list = must('timeline');
    list.replaceChildren();
    for (const event of this.timeline) {
      const li = el('li', `event ${event.name}`);
      let detail = '';
      if (event.name === 'DecisionEvaluated') {
        const outcome = event.payload['outcome'] as Record<string, { value?: unknown }>;
        detail = ` → ${Object.values(outcome)
          .map((v) => v.value)
          .join(', ')}`;
      } else if (event.name === 'TaskCompleted' || event.name === 'CompensationRequired') {
        detail = `: ${String(event.payload['task'])}`;
      }
      li.textContent = `#${event.height} ${event.name}${detail}`;
      list.append(li);
    }
  }
}

const base =
  new URLSearchParams(window.location.search).get('api') ??
  localStorage.getItem('tabforge-api') ??
  'http://127.0.0.1:8471';
localStorage.setItem('tabforge-api', base);
(must('apibase') as HTMLInputElement).value = base;
must('apibase').addEventListener('change', (e) => {
  localStorage.setItem('tabforge-api', (e.target as HTMLInputElement).value);
  window.location.reload();
});

new Console(base).start();
