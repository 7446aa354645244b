/** Shapes of the gateway's REST payloads, mirrored 1:1. */

export type InstanceStatus = 'Running' | 'Completed' | 'Aborted';

export interface ContractEntry {
  contract: string;
  instances: string[];
}

export interface InstanceView {
  instance: string;
  contract: string;
  status: InstanceStatus;
  marking: [string, number][];
  variables: Record<string, string | boolean | null>;
  documents: { cid: string; signer: string; task: string; recorded_at: number }[];
  completed_tasks: string[];
  enabled_tasks: string[];
}

export interface BindingSummary {
  name: string;
  required_params: string[];
  documents_expected: string[];
  url?: string;
}

export interface ChainEvent {
  height: number;
  index: number;
  name: string;
  payload: Record<string, unknown>;
}

export interface EventBatch {
  events: ChainEvent[];
  next: number;
}

export interface WorklistItem {
  instance: string;
  task: string;
  name: string;
  binding: BindingSummary;
}

export interface CompletionResult {
  status: string;
  events: { name: string; payload: Record<string, unknown> }[];
}

export interface ApiFailure {
  code: string;
  message: string;
}
