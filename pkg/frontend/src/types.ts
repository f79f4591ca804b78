/** Wire shapes of the retrieval service's JSON API. */

export interface ResultEntry {
  id: number;
  score: number;
  name?: string;
}

export interface ResultsPayload {
  state: string;
  model_version: number;
  positives_fed: number;
  entries: ResultEntry[];
}

export interface SessionCreated {
  id: string;
  state: string;
}

export interface SessionMetadata {
  id: string;
  state: string;
  positives_fed: number;
  steps_applied: number;
  lists_published: number;
  model_version: number;
  query: string;
  created_at: number;
  failure?: string;
}

export interface SessionStats {
  id: string;
  state: string;
  positives_fed: number;
  steps_applied: number;
  lists_published: number;
  model_version: number;
}

export interface ServiceError {
  code: string;
  message: string;
}
