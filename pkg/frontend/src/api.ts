/** Thin typed client for the gateway REST API. */

import type {
  BindingSummary,
  CompletionResult,
  ContractEntry,
  EventBatch,
  InstanceView,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseFailure(response: Response): Promise<never> {
  let code = 'HttpError';
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    if (body && typeof body.code === 'string') {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the HTTP status text
  }
  throw new ApiError(response.status, code, message);
}

export class GatewayClient {
  constructor(public base: string) {
    this.base = base.replace(/\/$/, '');
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.base + path);
    if (!response.ok) await parseFailure(response);
    return response.json() as Promise<T>;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) await parseFailure(response);
    return response.json() as Promise<T>;
  }

  listContracts(): Promise<ContractEntry[]> {
    return this.getJson('/contracts');
  }

  deploy(packageContent: unknown): Promise<{ contract: string }> {
    return this.postJson('/contracts', packageContent);
  }

  startInstance(contract: string): Promise<{ instance: string }> {
    return this.postJson(`/contracts/${contract}/instances`, {});
  }

  instance(id: string): Promise<InstanceView> {
    return this.getJson(`/instances/${id}`);
  }

  enabledTasks(id: string): Promise<string[]> {
    return this.getJson(`/instances/${id}/tasks`);
  }

  bindingSummary(id: string, task: string): Promise<BindingSummary> {
    return this.getJson(`/instances/${id}/tasks/${task}/binding`);
  }

  /** Long-poll: resolves as soon as events exist past `from`, or after `wait` seconds. */
  events(id: string, from: number, wait: number): Promise<EventBatch> {
    return this.getJson(`/instances/${id}/events?from=${from}&wait=${wait}`);
  }

  async uploadDocument(data: Blob | Uint8Array): Promise<string> {
    const response = await fetch(this.base + '/documents', {
      method: 'POST',
      headers: { 'Content-Type': 'application/octet-stream' },
      body: data as BodyInit,
    });
    if (!response.ok) await parseFailure(response);
    const body = (await response.json()) as { cid: string };
    return body.cid;
  }

  complete(
    id: string,
    task: string,
    params: Record<string, unknown>,
    docCids: string[],
  ): Promise<CompletionResult> {
    return this.postJson(`/instances/${id}/tasks/${task}/complete`, {
      params,
      doc_cids: docCids,
    });
  }
}
