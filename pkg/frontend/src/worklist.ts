/** Worklist assembly: the union of enabled tasks across running instances.
 *
 * Enabledness always comes from the server; nothing is computed locally.
 */

import { GatewayClient } from './api.js';
import type { WorklistItem } from './types.js';

export async function loadWorklist(client: GatewayClient): Promise<WorklistItem[]> {
  const items: WorklistItem[] = [];
  for (const entry of await client.listContracts()) {
    for (const instanceId of entry.instances) {
      const view = await client.instance(instanceId);
      if (view.status !== 'Running') continue;
      for (const task of view.enabled_tasks) {
        const binding = await client.bindingSummary(instanceId, task);
        items.push({ instance: instanceId, task, name: binding.name, binding });
      }
    }
  }
  items.sort((a, b) =>
    a.instance === b.instance ? a.task.localeCompare(b.task) : a.instance.localeCompare(b.instance),
  );
  return items;
}

export interface CompletionForm {
  params: Record<string, unknown>;
  files: (Blob | Uint8Array)[];
}

export type CompletionOutcome =
  | { kind: 'completed'; decision?: string; aborted: boolean }
  | { kind: 'not_enabled'; message: string }
  | { kind: 'failed'; code: string; message: string };

/** Upload attachments, then submit the completion; one in-flight per form. */
export async function submitCompletion(
  client: GatewayClient,
  item: { instance: string; task: string },
  form: CompletionForm,
): Promise<CompletionOutcome> {
  try {
    const docCids: string[] = [];
    for (const file of form.files) {
      docCids.push(await client.uploadDocument(file));
    }
    const result = await client.complete(item.instance, item.task, form.params, docCids);
    const decisionEvent = result.events.find((e) => e.name === 'DecisionEvaluated');
    let decision: string | undefined;
    if (decisionEvent) {
      const outcome = decisionEvent.payload['outcome'] as Record<string, { value?: unknown }>;
      const first = Object.values(outcome)[0];
      decision = first?.value !== undefined ? String(first.value) : undefined;
    }
    const aborted = result.events.some((e) => e.name === 'InstanceAborted');
    return { kind: 'completed', decision, aborted };
  } catch (err) {
    if (err && typeof err === 'object' && 'code' in err) {
      const apiError = err as { code: string; message: string };
      if (apiError.code === 'NotEnabled') {
        return { kind: 'not_enabled', message: apiError.message };
      }
      return { kind: 'failed', code: apiError.code, message: apiError.message };
    }
    return { kind: 'failed', code: 'NetworkError', message: String(err) };
  }
}
