/** Typed client for the latentaug HTTP/JSON service.
 *
 * Every image the dashboard shows comes back from these calls; nothing is
 * rendered or approximated client-side.
 */

export interface ServiceConfig {
  resolution: number;
  latent_dim: number;
  num_style_inputs: number;
  n_directions: number;
  lpips_threshold: number;
  max_magnitude: number;
}

export interface ImageEntry {
  id: number;
  path: string;
  label: number;
  split: string;
}

export interface DirectionInfo {
  index: number;
  singular_value: number;
  degenerate: boolean;
  status: "unreviewed" | "relevant" | "duplicate" | "rejected";
  name: string | null;
  duplicate_of: number | null;
  rank_score: number | null;
}

export interface InversionInfo {
  inversion_id: string;
  source: string;
  l2: number;
  loss_trace: { l2: number; lpips: number }[];
}

export interface EditRequest {
  inversion_id?: string;
  latent?: number[] | number[][];
  direction_index: number;
  magnitude: number;
  layer_range?: [number, number];
  size?: number;
}

export interface EditResult {
  png: Uint8Array;
  lpips: number;
  magnitude: number;
}

export interface CurationUpdate {
  index: number;
  status: string;
  name?: string | null;
  duplicate_of?: number | null;
  notes?: string | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, detail);
}

export class ExplorerApi {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.getJson("/health");
  }

  config(): Promise<ServiceConfig> {
    return this.getJson("/config");
  }

  async listImages(split?: string): Promise<ImageEntry[]> {
    const query = split ? `?split=${encodeURIComponent(split)}` : "";
    const body = await this.getJson<{ images: ImageEntry[] }>(`/images${query}`);
    return body.images;
  }

  imageUrl(id: number, size?: number): string {
    const query = size ? `?size=${size}` : "";
    return `${this.baseUrl}/images/${id}${query}`;
  }

  invert(imageId: number, steps = 5): Promise<InversionInfo> {
    return this.postJson("/invert", { image_id: imageId, steps });
  }

  async invertUpload(png: Uint8Array | Blob, steps = 5): Promise<InversionInfo> {
    const body = png instanceof Blob ? png : new Blob([png as BlobPart]);
    const response = await this.fetchImpl(`${this.baseUrl}/invert?steps=${steps}`, {
      method: "POST",
      headers: { "content-type": "image/png" },
      body,
    });
    await raiseForStatus(response);
    return (await response.json()) as InversionInfo;
  }

  /** Render a directional edit; magnitude 0 returns the reconstruction itself. */
  async edit(request: EditRequest, signal?: AbortSignal): Promise<EditResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/edit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
      signal,
    });
    await raiseForStatus(response);
    const bytes = new Uint8Array(await response.arrayBuffer());
    return {
      png: bytes,
      lpips: Number(response.headers.get("X-Lpips") ?? "nan"),
      magnitude: Number(response.headers.get("X-Magnitude") ?? request.magnitude),
    };
  }

  async directions(ranked = false): Promise<DirectionInfo[]> {
    const query = ranked ? "?ranked=true" : "";
    const body = await this.getJson<{ directions: DirectionInfo[] }>(
      `/directions${query}`,
    );
    return body.directions;
  }

  curate(update: CurationUpdate): Promise<DirectionInfo> {
    return this.postJson("/curation", update);
  }

  artifacts(): Promise<{ artifacts: unknown[] }> {
    return this.getJson("/artifacts");
  }

  jobs(): Promise<{ jobs: unknown[] }> {
    return this.getJson("/jobs");
  }
}
