/**
 * SVG spectrum chart: continuum-removed curve (black), one curvature stem per
 * band (green), and clickable markers on the significant feature points (red
 * for concave, magenta for convex).
 *
 * All band positions, curvature values and significance flags are taken
 * verbatim from the API payloads; the chart only maps them to pixels.
 */

import type { FeaturePoint, FeaturesResponse, SpectrumResponse } from './api.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

export const CURVE_COLOR = '#111111';
export const STEM_COLOR = '#1a9e1a';
export const CONCAVE_COLOR = '#d62728';
export const CONVEX_COLOR = '#e377c2';

export interface ChartOptions {
  width?: number;
  height?: number;
  onMarkerClick?: (point: FeaturePoint) => void;
}

export class SpectrumChart {
  private readonly width: number;
  private readonly height: number;
  private readonly onMarkerClick?: (point: FeaturePoint) => void;
  private readonly svg: SVGSVGElement;

  constructor(private readonly container: HTMLElement, options: ChartOptions = {}) {
    this.width = options.width ?? 900;
    this.height = options.height ?? 420;
    this.onMarkerClick = options.onMarkerClick;
    this.svg = document.createElementNS(SVG_NS, 'svg');
    this.svg.setAttribute('viewBox', `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute('class', 'spectrum-chart');
    container.appendChild(this.svg);
  }

  /** Bands of the markers currently shown, in drawing order. */
  markerBands(): number[] {
    return Array.from(this.svg.querySelectorAll('[data-band]')).map((el) =>
      Number((el as SVGElement).dataset.band),
    );
  }

  render(spectrum: SpectrumResponse, features: FeaturesResponse): void {
    this.svg.replaceChildren();
    const n = spectrum.wavelengths.length;
    if (n < 2) return;

    const margin = 36;
    const plotW = this.width - 2 * margin;
    const plotH = this.height - 2 * margin;
    const xAt = (band: number) => margin + (plotW * band) / (n - 1);

    const values = spectrum.continuum_removed.map((v) => v ?? 0);
    const vMax = Math.max(1, ...values) * 1.05;
    const yValue = (v: number) => margin + plotH * (1 - v / vMax);

    const kMax = Math.max(features.threshold, ...features.kappa.map(Math.abs), 1e-12) * 1.1;
    const zeroY = margin + plotH * 0.5;
    const yKappa = (k: number) => zeroY - (k / kMax) * plotH * 0.45;

    this.line(margin, margin + plotH, margin + plotW, margin + plotH, '#555', '1');
    this.line(margin, margin, margin, margin + plotH, '#555', '1');
    const zero = this.line(margin, zeroY, margin + plotW, zeroY, '#bbb', '0.5');
    zero.setAttribute('stroke-dasharray', '4 4');

    for (let band = 0; band < n; band++) {
      const k = features.kappa[band];
      if (k === 0) continue;
      this.line(xAt(band), zeroY, xAt(band), yKappa(k), STEM_COLOR, '1');
    }

    const path = spectrum.continuum_removed
      .map((v, band) => `${xAt(band).toFixed(2)},${yValue(v ?? 0).toFixed(2)}`)
      .join(' ');
    const curve = document.createElementNS(SVG_NS, 'polyline');
    curve.setAttribute('points', path);
    curve.setAttribute('fill', 'none');
    curve.setAttribute('stroke', CURVE_COLOR);
    curve.setAttribute('stroke-width', '1.4');
    this.svg.appendChild(curve);

    for (const point of features.points) {
      if (!point.significant) continue;
      const marker = document.createElementNS(SVG_NS, 'circle');
      marker.setAttribute('cx', xAt(point.band).toFixed(2));
      marker.setAttribute('cy', yKappa(point.kappa).toFixed(2));
      marker.setAttribute('r', '4.5');
      marker.setAttribute('fill', point.direction === 'concave' ? CONCAVE_COLOR : CONVEX_COLOR);
      marker.setAttribute('class', 'feature-marker');
      marker.dataset.band = String(point.band);
      marker.dataset.direction = point.direction;
      if (this.onMarkerClick) {
        marker.addEventListener('click', () => this.onMarkerClick?.(point));
      }
      this.svg.appendChild(marker);
    }
  }

  private line(
    x1: number, y1: number, x2: number, y2: number,
    stroke: string, width: string,
  ): SVGLineElement {
    const el = document.createElementNS(SVG_NS, 'line');
    el.setAttribute('x1', x1.toFixed(2));
    el.setAttribute('y1', y1.toFixed(2));
    el.setAttribute('x2', x2.toFixed(2));
    el.setAttribute('y2', y2.toFixed(2));
    el.setAttribute('stroke', stroke);
    el.setAttribute('stroke-width', width);
    this.svg.appendChild(el);
    return el;
  }
}

/**
 * The atom a marker click inserts: thresholds are rounded to the slider
 * value (not the point's exact kappa) so authored rules stay robust.
 */
export function atomForPoint(point: FeaturePoint, threshold: number): string {
  const wavelength = Math.round(point.wavelength_nm);
  return point.direction === 'concave'
    ? `CV[${wavelength}] < -${threshold}`
    : `CV[${wavelength}] > ${threshold}`;
}
