/**
 * Typed client for the classification service HTTP API.
 *
 * Every number the workbench displays comes from these payloads; the UI does
 * no spectral math of its own.
 */

export interface ClassInfo {
  id: number;
  name: string;
  color: string;
}

export interface MetaResponse {
  rows: number;
  cols: number;
  bands: number;
  wavelengths: number[];
  threshold: number;
  continuum_mode: string;
  classes: ClassInfo[];
}

export interface SpectrumResponse {
  x: number;
  y: number;
  wavelengths: number[];
  raw: (number | null)[];
  continuum_removed: (number | null)[];
}

export interface FeaturePoint {
  band: number;
  wavelength_nm: number;
  kappa: number;
  direction: 'convex' | 'concave';
  significant: boolean;
}

export interface FeaturesResponse {
  x: number;
  y: number;
  threshold: number;
  kappa: number[];
  points: FeaturePoint[];
}

export interface Diagnostic {
  line: number;
  col: number;
  message: string;
  kind: string;
}

export interface ValidateResponse {
  ok: true;
  classes: string[];
  atom_count: number;
}

export interface PreviewResponse {
  width: number;
  height: number;
  stride: number;
  counts: Record<string, number>;
  classes: ClassInfo[];
}

/** 422 from the rule endpoints: carries the service's positioned diagnostics. */
export class RuleDiagnosticsError extends Error {
  constructor(readonly diagnostics: Diagnostic[]) {
    super(diagnostics.map((d) => `${d.line}:${d.col}: ${d.message}`).join('; '));
    this.name = 'RuleDiagnosticsError';
  }
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

async function readError(resp: Response): Promise<never> {
  let body: unknown = null;
  try {
    body = await resp.json();
  } catch {
    /* non-JSON error body */
  }
  if (resp.status === 422 && body && typeof body === 'object' && 'diagnostics' in body) {
    throw new RuleDiagnosticsError((body as { diagnostics: Diagnostic[] }).diagnostics);
  }
  const message =
    body && typeof body === 'object' && 'error' in body
      ? String((body as { error: unknown }).error)
      : resp.statusText;
  throw new ApiError(resp.status, message);
}

/** Everything the workbench needs from the service; ApiClient is the real one. */
export interface WorkbenchApi {
  meta(): Promise<MetaResponse>;
  spectrum(x: number, y: number): Promise<SpectrumResponse>;
  features(x: number, y: number, threshold: number): Promise<FeaturesResponse>;
  validateRules(text: string): Promise<ValidateResponse>;
  previewRules(text: string, downsample: number, signal?: AbortSignal): Promise<PreviewResponse>;
  labelsUrl(stamp: number): string;
}

export class ApiClient implements WorkbenchApi {
  constructor(private readonly base: string = '') {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) await readError(resp);
    return (await resp.json()) as T;
  }

  meta(): Promise<MetaResponse> {
    return this.getJson<MetaResponse>('/api/meta');
  }

  spectrum(x: number, y: number): Promise<SpectrumResponse> {
    return this.getJson<SpectrumResponse>(`/api/spectrum?x=${x}&y=${y}`);
  }

  features(x: number, y: number, threshold: number): Promise<FeaturesResponse> {
    return this.getJson<FeaturesResponse>(`/api/features?x=${x}&y=${y}&threshold=${threshold}`);
  }

  async validateRules(text: string): Promise<ValidateResponse> {
    const resp = await fetch(this.base + '/api/rules/validate', {
      method: 'POST',
      headers: { 'Content-Type': 'text/plain; charset=utf-8' },
      body: text,
    });
    if (!resp.ok) await readError(resp);
    return (await resp.json()) as ValidateResponse;
  }

  async previewRules(
    text: string,
    downsample: number,
    signal?: AbortSignal,
  ): Promise<PreviewResponse> {
    const resp = await fetch(this.base + `/api/rules/preview?downsample=${downsample}`, {
      method: 'POST',
      headers: { 'Content-Type': 'text/plain; charset=utf-8' },
      body: text,
      signal,
    });
    if (!resp.ok) await readError(resp);
    return (await resp.json()) as PreviewResponse;
  }

  /** URL of the most recent preview image; `stamp` busts the browser cache. */
  labelsUrl(stamp: number): string {
    return this.base + `/api/labels.png?t=${stamp}`;
  }
}
