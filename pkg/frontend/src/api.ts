/** Typed client for the explorer's JSON API. All numbers are passed through
 * untouched: the UI never recomputes or renormalizes model outputs. */

export interface ModelInfo {
  id: string;
  kind: string;
}

export interface CatalogResponse {
  models: ModelInfo[];
  default_model: string;
  dataset_id: string;
  dataset: { n: number; num_classes: number; latent_dim: number };
  vae: { d: number; image_shape: number[] };
}

export interface SampleRow {
  id: string;
  class_id: number;
  entropy: number;
  predicted: number;
  correct: boolean;
}

export interface SamplesResponse {
  model_id: string;
  dataset_id: string;
  split: string;
  samples: SampleRow[];
}

export interface ImagePayload {
  b64: string;
  shape: number[];
  dtype: string;
}

export interface SampleDetail {
  id: string;
  model_id: string;
  dataset_id: string;
  class_id: number;
  latent: number[];
  softmax: number[];
  entropy: number;
  predicted: number;
  image: ImagePayload;
  interval?: { y_hat: number[]; delta: number[] };
}

export interface CounterfactualRequest {
  sample_id: string;
  model_id?: string;
  eta1: number;
  eta2: number;
  eta3: number;
  entropy_sign: "minimize" | "maximize";
  max_iters?: number;
  lr?: number;
  seed?: number;
}

export interface EvidenceResponse {
  model_id: string;
  dataset_id: string;
  sample_id: string;
  request: Record<string, unknown>;
  z_hat: number[];
  image: ImagePayload;
  rho: number[];
  entropy: number;
  predicted: number;
  correct: boolean | null;
  ae_z: number;
  ssim: number;
  objective_trace: number[];
  anchor: { entropy: number; predicted: number; rho: number[]; class_id: number };
}

export interface ReliabilityResponse {
  model_id: string;
  dataset_id: string;
  fractions: number[];
  accuracies: number[];
}

export interface ApiError {
  error: string;
  field?: string;
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    const err = body as ApiError;
    throw new Error(err.field ? `${err.error} (field: ${err.field})` : err.error);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  getModels(): Promise<CatalogResponse> {
    return fetch(`${this.base}/api/models`).then((r) => asJson<CatalogResponse>(r));
  }

  getSamples(split = "val", model?: string): Promise<SamplesResponse> {
    const q = new URLSearchParams({ split });
    if (model) q.set("model", model);
    return fetch(`${this.base}/api/samples?${q}`).then((r) => asJson<SamplesResponse>(r));
  }

  getSample(id: string, model?: string): Promise<SampleDetail> {
    const q = model ? `?${new URLSearchParams({ model })}` : "";
    return fetch(`${this.base}/api/sample/${encodeURIComponent(id)}${q}`).then((r) =>
      asJson<SampleDetail>(r),
    );
  }

  postCounterfactual(req: CounterfactualRequest): Promise<EvidenceResponse> {
    return fetch(`${this.base}/api/counterfactual`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    }).then((r) => asJson<EvidenceResponse>(r));
  }

  getReliability(model: string): Promise<ReliabilityResponse> {
    const q = new URLSearchParams({ model });
    return fetch(`${this.base}/api/reliability?${q}`).then((r) =>
      asJson<ReliabilityResponse>(r),
    );
  }
}
