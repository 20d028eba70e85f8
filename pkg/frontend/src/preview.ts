/**
 * Classification preview: the label-map image straight from the service plus
 * a legend of class colors and pixel counts.
 */

import type { PreviewResponse } from './api.js';

export class PreviewPanel {
  private readonly image: HTMLImageElement;
  private readonly legend: HTMLUListElement;
  private readonly caption: HTMLElement;

  constructor(container: HTMLElement,
              onPixelPick?: (fracX: number, fracY: number) => void) {
    this.image = document.createElement('img');
    this.image.className = 'preview-image';
    this.image.alt = 'classification preview';
    if (onPixelPick) {
      this.image.addEventListener('click', (ev: MouseEvent) => {
        const rect = this.image.getBoundingClientRect();
        if (rect.width === 0 || rect.height === 0) return;
        onPixelPick((ev.clientX - rect.left) / rect.width,
                    (ev.clientY - rect.top) / rect.height);
      });
    }
    this.caption = document.createElement('div');
    this.caption.className = 'preview-caption';
    this.legend = document.createElement('ul');
    this.legend.className = 'legend';
    container.append(this.image, this.caption, this.legend);
  }

  render(preview: PreviewResponse, imageUrl: string): void {
    this.image.src = imageUrl;
    this.caption.textContent =
      `${preview.width} x ${preview.height} at stride ${preview.stride}`;
    const items = preview.classes
      .filter((c) => preview.counts[String(c.id)] !== undefined)
      .map((c) => {
        const item = document.createElement('li');
        item.dataset.classId = String(c.id);
        const swatch = document.createElement('span');
        swatch.className = 'swatch';
        swatch.style.backgroundColor = c.color;
        const label = document.createElement('span');
        label.textContent = `${c.name}: ${preview.counts[String(c.id)]} px`;
        item.append(swatch, label);
        return item;
      });
    this.legend.replaceChildren(...items);
  }
}
