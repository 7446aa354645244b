/**
 * Integration: the console's client modules against a live gateway.
 *
 * Spawns the real backend (`python3 -m tabforge.cli serve`) in a scratch
 * directory, deploys the bundled harvester model, and drives the operator
 * scenario through the same code paths the UI uses: loadWorklist,
 * submitCompletion and the long-poll event stream.
 */

import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { GatewayClient } from '../src/api.js';
import { waitForEvent } from '../src/events.js';
import { loadWorklist, submitCompletion } from '../src/worklist.js';

interface Gateway {
  proc: ChildProcess;
  base: string;
}

let nextPort = 8600 + Math.floor(Math.random() * 300);
let backend: Gateway;
let workdir: string;
let corpusDir: string;
let client: GatewayClient;

function corpusDoc(name: string): Uint8Array {
  return readFileSync(join(corpusDir, 'docs', name));
}

async function waitForGateway(base: string): Promise<void> {
  for (let attempt = 0; attempt < 150; attempt++) {
    try {
      const response = await fetch(`${base}/contracts`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error('gateway did not come up');
}

async function launchGateway(): Promise<Gateway> {
  const port = nextPort++;
  const dir = mkdtempSync(join(tmpdir(), 'tabforge-console-'));
  const proc = spawn(
    'python3',
    [
      '-m', 'tabforge.cli', 'serve',
      '--port', String(port),
      '--chain-log', join(dir, 'chain.log'),
      '--cas-dir', join(dir, 'cas'),
      '--identity', join(dir, 'identity.json'),
    ],
    { cwd: dir, stdio: ['ignore', 'inherit', 'inherit'] },
  );
  const base = `http://127.0.0.1:${port}`;
  await waitForGateway(base);
  return { proc, base };
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), 'tabforge-console-'));
  corpusDir = execFileSync(
    'python3',
    ['-c', "import tabforge, os; print(os.path.join(os.path.dirname(tabforge.__file__), 'corpus'))"],
    { encoding: 'utf-8' },
  ).trim();

  execFileSync(
    'python3',
    [
      '-m', 'tabforge.cli', 'compile',
      join(corpusDir, 'harvester.bpmn'),
      '--dmn', join(corpusDir, 'inscost.dmn'),
      '-o', join(workdir, 'pkg.json'),
    ],
    { cwd: workdir },
  );

  backend = await launchGateway();
  client = new GatewayClient(backend.base);
}, 60_000);

afterAll(() => {
  backend?.proc.kill();
});

async function deployAndStart(): Promise<string> {
  const packageContent = JSON.parse(readFileSync(join(workdir, 'pkg.json'), 'utf-8'));
  await client.deploy(packageContent).catch((err) => {
    if (err?.code !== 'AlreadyDeployed') throw err;
  });
  const contracts = await client.listContracts();
  const { instance } = await client.startInstance(contracts[0]!.contract);
  return instance;
}

function itemsFor(items: { instance: string; task: string }[], instance: string): string[] {
  return items.filter((i) => i.instance === instance).map((i) => i.task);
}

async function completeWithDoc(instance: string, task: string, doc?: string) {
  const outcome = await submitCompletion(
    client,
    { instance, task },
    { params: {}, files: doc ? [corpusDoc(doc)] : [] },
  );
  expect(outcome.kind, `${task}: ${JSON.stringify(outcome)}`).toBe('completed');
  return outcome;
}

describe('operator console against a live gateway', () => {
  it(
    'worklist follows the harvester scenario task by task',
    async () => {
      const instance = await deployAndStart();

      expect(itemsFor(await loadWorklist(client), instance)).toEqual(['RecAgr']);

      await completeWithDoc(instance, 'RecAgr', 'SalesAgr.json');
      expect(itemsFor(await loadWorklist(client), instance)).toEqual(['GetTrReq']);

      await completeWithDoc(instance, 'GetTrReq', 'TrRequirements.json');
      expect(itemsFor(await loadWorklist(client), instance)).toEqual(['GetIns', 'GetTransp']);

      const worklist = await loadWorklist(client);
      const getIns = worklist.find((i) => i.instance === instance && i.task === 'GetIns');
      expect(getIns?.name).toBe('Arrange insurance');
      expect(getIns?.binding.required_params).toEqual(['hazmat', 'quote']);
    },
    30_000,
  );

  it(
    'completed instances contribute no worklist items',
    async () => {
      const instance = await deployAndStart();
      for (const [task, doc] of [
        ['RecAgr', 'SalesAgr.json'],
        ['GetTrReq', 'TrRequirements.json'],
        ['GetIns', 'Insurance.json'],
        ['GetTransp', 'Transport.json'],
        ['DoTransp', 'Delivery.json'],
        ['RevAndFin', undefined],
      ] as const) {
        const outcome = await completeWithDoc(instance, task, doc);
        if (task === 'GetTransp') {
          expect(outcome.kind === 'completed' && outcome.decision).toBe('proceed');
        }
      }
      const view = await client.instance(instance);
      expect(view.status).toBe('Completed');
      expect(itemsFor(await loadWorklist(client), instance)).toEqual([]);
    },
    30_000,
  );

  it(
    'double submit of the same form reports NotEnabled',
    async () => {
      const instance = await deployAndStart();
      await completeWithDoc(instance, 'RecAgr', 'SalesAgr.json');
      const second = await submitCompletion(
        client,
        { instance, task: 'RecAgr' },
        { params: {}, files: [corpusDoc('SalesAgr.json')] },
      );
      expect(second.kind).toBe('not_enabled');
    },
    30_000,
  );

  it(
    'abort surfaces InstanceAborted within one poll interval',
    async () => {
      const instance = await deployAndStart();
      await completeWithDoc(instance, 'RecAgr', 'SalesAgr.json');
      await completeWithDoc(instance, 'GetTrReq', 'TrRequirements.json');
      await completeWithDoc(instance, 'GetIns', 'InsuranceHigh.json');

      const seen = waitForEvent(client, instance, (e) => e.name === 'InstanceAborted', 10_000, 1.5);
      const outcome = await completeWithDoc(instance, 'GetTransp', 'Transport.json');
      const completedAt = Date.now();
      expect(outcome.kind === 'completed' && outcome.aborted).toBe(true);

      const event = await seen;
      const latencyMs = Date.now() - completedAt;
      expect(event.name).toBe('InstanceAborted');
      expect(latencyMs).toBeLessThanOrEqual(2000);

      const view = await client.instance(instance);
      expect(view.status).toBe('Aborted');
      expect(itemsFor(await loadWorklist(client), instance)).toEqual([]);
    },
    30_000,
  );

  it(
    'a recorded session replayed against a fresh backend reaches the same status',
    async () => {
      interface Recorded {
        method: string;
        path: string;
        body?: Uint8Array | string;
        contentType?: string;
      }
      const recorded: Recorded[] = [];
      const original = globalThis.fetch;

      const first = await launchGateway();
      try {
        // record every request the console issues during a full session
        globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
          const url = String(input);
          if (url.startsWith(first.base)) {
            recorded.push({
              method: init?.method ?? 'GET',
              path: url.slice(first.base.length),
              body: init?.body as Uint8Array | string | undefined,
              contentType: (init?.headers as Record<string, string> | undefined)?.['Content-Type'],
            });
          }
          return original(input, init);
        }) as typeof fetch;

        const sessionClient = new GatewayClient(first.base);
        const packageContent = JSON.parse(readFileSync(join(workdir, 'pkg.json'), 'utf-8'));
        await sessionClient.deploy(packageContent);
        const { instance } = await sessionClient.startInstance(
          (await sessionClient.listContracts())[0]!.contract,
        );
        for (const [task, doc] of [
          ['RecAgr', 'SalesAgr.json'],
          ['GetTrReq', 'TrRequirements.json'],
          ['GetIns', 'InsuranceHigh.json'],
          ['GetTransp', 'Transport.json'],
        ] as const) {
          await submitCompletion(
            sessionClient,
            { instance, task },
            { params: {}, files: doc ? [corpusDoc(doc)] : [] },
          );
        }
        globalThis.fetch = original;
        const finalStatus = (await sessionClient.instance(instance)).status;
        expect(finalStatus).toBe('Aborted');

        // replay the raw request log against a brand-new backend
        const second = await launchGateway();
        try {
          for (const entry of recorded) {
            await original(second.base + entry.path, {
              method: entry.method,
              body: entry.body as BodyInit | undefined,
              headers: entry.contentType ? { 'Content-Type': entry.contentType } : undefined,
            });
          }
          const replayed = new GatewayClient(second.base);
          expect((await replayed.instance(instance)).status).toBe(finalStatus);
        } finally {
          second.proc.kill();
        }
      } finally {
        globalThis.fetch = original;
        first.proc.kill();
      }
    },
    60_000,
  );
});
