/**
 * Workbench state machine.
 *
 * Invariants maintained here:
 *  - the preview on screen always corresponds to the last successfully
 *    validated rule text (stale responses are dropped, latest request wins);
 *  - diagnostics are delivered together with the exact text that produced
 *    them, never against newer text;
 *  - at most one preview request is in flight (older ones are aborted).
 */

import {
  Diagnostic,
  FeaturesResponse,
  PreviewResponse,
  RuleDiagnosticsError,
  SpectrumResponse,
  WorkbenchApi,
} from './api.js';

export interface WorkbenchState {
  pixel: { x: number; y: number } | null;
  threshold: number;
  ruleText: string;
  diagnostics: Diagnostic[];
  /** rule text the current preview was computed from, null before the first */
  previewText: string | null;
  preview: PreviewResponse | null;
  previewStamp: number;
}

export interface WorkbenchHooks {
  onSpectrum?(spectrum: SpectrumResponse, features: FeaturesResponse): void;
  onDiagnostics?(text: string, diagnostics: Diagnostic[]): void;
  onValid?(text: string, classes: string[]): void;
  onPreview?(preview: PreviewResponse, imageUrl: string): void;
  onError?(error: unknown): void;
}

export class WorkbenchController {
  readonly state: WorkbenchState = {
    pixel: null,
    threshold: 0.1,
    ruleText: '',
    diagnostics: [],
    previewText: null,
    preview: null,
    previewStamp: 0,
  };

  downsample = 4;
  idleMs = 400;

  private previewGeneration = 0;
  private inflight: AbortController | null = null;
  private idleTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly api: WorkbenchApi, private readonly hooks: WorkbenchHooks = {}) {}

  async selectPixel(x: number, y: number): Promise<void> {
    this.state.pixel = { x, y };
    await this.refreshPixel();
  }

  async setThreshold(threshold: number): Promise<void> {
    this.state.threshold = threshold;
    await this.refreshPixel();
  }

  private async refreshPixel(): Promise<void> {
    if (!this.state.pixel) return;
    const { x, y } = this.state.pixel;
    try {
      const [spectrum, features] = await Promise.all([
        this.api.spectrum(x, y),
        this.api.features(x, y, this.state.threshold),
      ]);
      this.hooks.onSpectrum?.(spectrum, features);
    } catch (error) {
      this.hooks.onError?.(error);
    }
  }

  /** Validate-on-idle entry point for editor keystrokes. */
  ruleTextChanged(text: string): void {
    this.state.ruleText = text;
    if (this.idleTimer !== null) clearTimeout(this.idleTimer);
    this.idleTimer = setTimeout(() => {
      this.idleTimer = null;
      void this.validateAndPreview(text, this.downsample);
    }, this.idleMs);
  }

  /**
   * Validate `text`; on success request a preview.  A newer call supersedes
   * this one at every await point, so the preview that lands is always the
   * one for the latest text.
   */
  async validateAndPreview(text: string, downsample: number): Promise<PreviewResponse | null> {
    const generation = ++this.previewGeneration;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;

    let validated: string[];
    try {
      const result = await this.api.validateRules(text);
      validated = result.classes;
    } catch (error) {
      if (generation !== this.previewGeneration) return null;
      if (error instanceof RuleDiagnosticsError) {
        this.state.diagnostics = error.diagnostics;
        this.hooks.onDiagnostics?.(text, error.diagnostics);
      } else {
        this.hooks.onError?.(error);
      }
      return null;
    }
    if (generation !== this.previewGeneration) return null;
    this.state.diagnostics = [];
    this.hooks.onValid?.(text, validated);

    let preview: PreviewResponse;
    try {
      preview = await this.api.previewRules(text, downsample, controller.signal);
    } catch (error) {
      if (generation !== this.previewGeneration) return null;
      if ((error as Error).name !== 'AbortError') this.hooks.onError?.(error);
      return null;
    }
    if (generation !== this.previewGeneration) return null;

    this.state.previewText = text;
    this.state.preview = preview;
    this.state.previewStamp += 1;
    this.hooks.onPreview?.(preview, this.api.labelsUrl(this.state.previewStamp));
    return preview;
  }

  /** Full-resolution rerun of the last validated text. */
  async fullResolutionPreview(): Promise<PreviewResponse | null> {
    return this.validateAndPreview(this.state.ruleText, 1);
  }
}
