export interface StyleEntry {
  id: string;
  name: string;
  identity: boolean;
}

export interface StyleWeight {
  style_id: string;
  w: number;
}

export interface StylizeRequest {
  content: string; // base64 PNG
  weights: StyleWeight[];
  alpha: number;
  format?: "png";
}

export interface StylizeResponse {
  image: string; // base64 PNG
  millis: number;
  weights_normalized: boolean;
}

export interface Job {
  job_id: string;
  name: string;
  style_id: string;
  state: "queued" | "running" | "done" | "failed";
  iterations_done: number;
  loss: number | null;
  error: string | null;
}
