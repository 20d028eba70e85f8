/** Wires the workbench panels to the classification service API. */

import { ApiClient, FeaturePoint } from './api.js';
import { SpectrumChart, atomForPoint } from './chart.js';
import { RuleEditor, exportRules } from './editor.js';
import { PreviewPanel } from './preview.js';
import { WorkbenchController } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new ApiClient('');
  const meta = await api.meta();

  const thresholdSlider = el<HTMLInputElement>('threshold');
  const thresholdLabel = el<HTMLElement>('threshold-value');
  thresholdSlider.value = String(meta.threshold);
  thresholdLabel.textContent = meta.threshold.toFixed(2);

  const pixelX = el<HTMLInputElement>('pixel-x');
  const pixelY = el<HTMLInputElement>('pixel-y');
  pixelX.max = String(meta.cols - 1);
  pixelY.max = String(meta.rows - 1);
  el<HTMLElement>('cube-info').textContent =
    `${meta.cols} x ${meta.rows} px, ${meta.bands} bands ` +
    `(${meta.wavelengths[0].toFixed(0)}-${meta.wavelengths[meta.bands - 1].toFixed(0)} nm), ` +
    `${meta.continuum_mode} continuum`;

  let editor: RuleEditor;
  const chart = new SpectrumChart(el('chart'), {
    onMarkerClick: (point: FeaturePoint) => {
      editor.insertAtom(atomForPoint(point, Number(thresholdSlider.value)));
    },
  });

  const controller = new WorkbenchController(api, {
    onSpectrum: (spectrum, features) => {
      chart.render(spectrum, features);
      el<HTMLElement>('pixel-info').textContent =
        `pixel (${spectrum.x}, ${spectrum.y}): ` +
        `${features.points.filter((p) => p.significant).length} significant points`;
    },
    onDiagnostics: (_text, diagnostics) => editor.showDiagnostics(diagnostics),
    onValid: (_text, classes) => editor.showValid(classes),
    onPreview: (preview, imageUrl) => previewPanel.render(preview, imageUrl),
    onError: (error) => {
      el<HTMLElement>('error-banner').textContent = String(error);
    },
  });

  editor = new RuleEditor(el('editor'), (text) => controller.ruleTextChanged(text));

  const previewPanel = new PreviewPanel(el('preview'), (fracX, fracY) => {
    const x = Math.min(meta.cols - 1, Math.floor(fracX * meta.cols));
    const y = Math.min(meta.rows - 1, Math.floor(fracY * meta.rows));
    pixelX.value = String(x);
    pixelY.value = String(y);
    void controller.selectPixel(x, y);
  });

  el<HTMLButtonElement>('inspect').addEventListener('click', () => {
    void controller.selectPixel(Number(pixelX.value), Number(pixelY.value));
  });
  thresholdSlider.addEventListener('input', () => {
    const t = Number(thresholdSlider.value);
    thresholdLabel.textContent = t.toFixed(2);
    void controller.setThreshold(t);
  });
  el<HTMLButtonElement>('export').addEventListener('click', () => {
    exportRules(editor.text);
  });
  el<HTMLButtonElement>('full-res').addEventListener('click', () => {
    void controller.fullResolutionPreview();
  });

  void controller.selectPixel(Math.floor(meta.cols / 2), Math.floor(meta.rows / 2));
}

boot().catch((error) => {
  document.body.insertAdjacentText('afterbegin', `workbench failed to start: ${error}`);
});
