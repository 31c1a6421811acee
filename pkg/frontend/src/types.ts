/** Documents exchanged with the cohort generation service. */

export type JobState =
  | "QUEUED"
  | "PARSING"
  | "RETRIEVING"
  | "GENERATING"
  | "NORMALIZING"
  | "HEALING"
  | "EXECUTING"
  | "FUNNELING"
  | "DONE"
  | "FAILED";

export interface JobInfo {
  job_id: string;
  state: JobState;
  strategy: string;
  created_at: string;
  error: string | null;
  cohort_size: number | null;
}

export interface FunnelStepDoc {
  step_index: number;
  criterion_id: string;
  kind: "INDEX" | "INCLUSION" | "EXCLUSION";
  remaining_count: number;
  sql: string;
}

export interface FunnelDoc {
  steps: FunnelStepDoc[];
  final_cohort_size: number;
}

export interface MappingCandidate {
  concept_id: number;
  score: number;
}

export interface MappingDoc {
  term: string;
  domain: string;
  chosen: number[];
  verified: boolean;
  candidates: MappingCandidate[];
}

export interface SqlDoc {
  generated: string;
  resolved: string;
  healing_attempts: { sql: string; error: string | null }[];
  mappings: MappingDoc[];
}

export const STRATEGIES = ["zs", "rag_a", "rag_c", "rag_ac"] as const;
export type Strategy = (typeof STRATEGIES)[number];
