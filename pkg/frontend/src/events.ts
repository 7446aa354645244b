/** Long-poll event stream for one instance.
 *
 * The server holds each request open until events exist past the cursor (or
 * its wait elapses), so new events surface within one poll interval.
 */

import { GatewayClient } from './api.js';
import type { ChainEvent } from './types.js';

export class EventPoller {
  private cursor = 0;
  private stopped = false;

  constructor(
    private client: GatewayClient,
    private instanceId: string,
    private onEvent: (event: ChainEvent) => void,
    private waitSeconds = 1.5,
    private onError?: (err: unknown) => void,
  ) {}

  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      try {
        const batch = await this.client.events(this.instanceId, this.cursor, this.waitSeconds);
        for (const event of batch.events) {
          this.onEvent(event);
        }
        this.cursor = batch.next;
      } catch (err) {
        this.onError?.(err);
        await new Promise((resolve) => setTimeout(resolve, this.waitSeconds * 1000));
      }
    }
  }
}

/** Await a predicate over the stream; resolves with the matching event. */
export function waitForEvent(
  client: GatewayClient,
  instanceId: string,
  predicate: (event: ChainEvent) => boolean,
  timeoutMs: number,
  waitSeconds = 1.5,
): Promise<ChainEvent> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => {
      poller.stop();
      reject(new Error(`no matching event within ${timeoutMs}ms`));
    }, timeoutMs);
    const poller = new EventPoller(
      client,
      instanceId,
      (event) => {
        if (predicate(event)) {
          clearTimeout(timer);
          poller.stop();
          resolve(event);
        }
      },
      waitSeconds,
    );
    poller.start();
  });
}
