/**
 * Typed client for the editing service JSON API.
 *
 * Every mutation goes through the documented endpoints; the client never
 * fabricates server state. 409 (optimization queue full) is surfaced as
 * ApiError with retryable=true so the UI can show a retry affordance.
 */

export interface UploadResult {
  image_id: string;
  width: number;
  height: number;
}

export interface SessionInfo {
  session_id: string;
  identity_image_id: string;
  identity_error: number;
}

export interface EditTextResult {
  result_id: string;
  image_id: string;
  objective: number;
  trace: number[];
}

export interface EditExemplarResult {
  result_id: string;
  image_id: string;
}

export interface RetrievalHit {
  id: string;
  similarity: number;
  tags: string[];
}

export interface RetrievalResponse {
  query: string;
  results: RetrievalHit[];
}

export interface ClusterInfo {
  cluster: number;
  size: number;
  tags: string[];
  exemplars: string[];
  thumbnails: string[];
}

export interface ClustersResponse {
  k: number;
  purity: number;
  clusters: ClusterInfo[];
}

export interface HealthResponse {
  status: string;
  checkpoint_hash: string;
}

export class ApiError extends Error {
  status: number;
  retryable: boolean;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
    this.retryable = status === 409;
  }
}

async function readDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body, fall through
  }
  return res.statusText || `HTTP ${res.status}`;
}

export class StudioApi {
  constructor(private base: string, private fetchFn: typeof fetch = fetch) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) throw new ApiError(res.status, await readDetail(res));
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthResponse> {
    return this.json("/health");
  }

  uploadPng(png: Uint8Array): Promise<UploadResult> {
    return this.post("/images", { png_base64: base64encode(png) });
  }

  /** URL usable directly as an <img> src. */
  imageUrl(imageId: string): string {
    return `${this.base}/images/${imageId}`;
  }

  async imageBytes(imageId: string): Promise<Uint8Array> {
    const res = await this.fetchFn(this.imageUrl(imageId));
    if (!res.ok) throw new ApiError(res.status, await readDetail(res));
    return new Uint8Array(await res.arrayBuffer());
  }

  createSession(imageId: string): Promise<SessionInfo> {
    return this.post("/sessions", { image_id: imageId });
  }

  editText(
    sessionId: string,
    request: string,
    lambda: number,
    alpha: number,
    maskId?: string,
  ): Promise<EditTextResult> {
    return this.post(`/sessions/${sessionId}/edit-text`, {
      request,
      lambda,
      alpha,
      mask_id: maskId ?? null,
    });
  }

  editExemplar(
    sessionId: string,
    exemplarIds: string[],
    alpha: number,
  ): Promise<EditExemplarResult> {
    return this.post(`/sessions/${sessionId}/edit-exemplar`, {
      exemplar_ids: exemplarIds,
      alpha,
    });
  }

  /** Re-render an existing result at a new strength; no re-optimization. */
  async interpolate(
    sessionId: string,
    resultId: string,
    alpha: number,
  ): Promise<Uint8Array> {
    const q = `session=${encodeURIComponent(sessionId)}&result=${encodeURIComponent(resultId)}&alpha=${alpha}`;
    const res = await this.fetchFn(`${this.base}/interpolate?${q}`);
    if (!res.ok) throw new ApiError(res.status, await readDetail(res));
    return new Uint8Array(await res.arrayBuffer());
  }

  interpolateUrl(sessionId: string, resultId: string, alpha: number): string {
    return `${this.base}/interpolate?session=${encodeURIComponent(sessionId)}&result=${encodeURIComponent(resultId)}&alpha=${alpha}`;
  }

  retrieve(pairId: string, k = 5): Promise<RetrievalResponse> {
    return this.json(`/retrieve?pair_id=${encodeURIComponent(pairId)}&k=${k}`);
  }

  clusters(k = 8): Promise<ClustersResponse> {
    return this.json(`/clusters?k=${k}`);
  }
}

export function base64encode(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let bin = "";
    const chunk = 0x8000;
    for (let i = 0; i < bytes.length; i += chunk) {
      bin += String.fromCharCode(...bytes.subarray(i, i + chunk));
    }
    return btoa(bin);
  }
  return Buffer.from(bytes).toString("base64");
}
