/**
 * Rule editor: a plain textarea plus a diagnostics panel that pins the
 * service's line/column messages next to the text that produced them.
 */

import type { Diagnostic } from './api.js';

export class RuleEditor {
  readonly textarea: HTMLTextAreaElement;
  private readonly diagnosticsList: HTMLUListElement;
  private readonly status: HTMLElement;

  constructor(container: HTMLElement, onInput: (text: string) => void) {
    this.textarea = document.createElement('textarea');
    this.textarea.className = 'rule-editor';
    this.textarea.spellcheck = false;
    this.textarea.rows = 14;
    this.textarea.addEventListener('input', () => onInput(this.textarea.value));

    this.status = document.createElement('div');
    this.status.className = 'editor-status';

    this.diagnosticsList = document.createElement('ul');
    this.diagnosticsList.className = 'diagnostics';

    container.append(this.textarea, this.status, this.diagnosticsList);
  }

  get text(): string {
    return this.textarea.value;
  }

  setText(text: string): void {
    this.textarea.value = text;
  }

  /** Insert an atom at the cursor, joining onto an existing expression with AND. */
  insertAtom(atom: string): void {
    const pos = this.textarea.selectionStart ?? this.textarea.value.length;
    const before = this.textarea.value.slice(0, pos);
    const after = this.textarea.value.slice(pos);
    const needsAnd = /[\]\d)]\s*$/.test(before);
    const inserted = (needsAnd ? ' AND ' : '') + atom;
    this.textarea.value = before + inserted + after;
    const cursor = pos + inserted.length;
    this.textarea.setSelectionRange(cursor, cursor);
    this.textarea.dispatchEvent(new Event('input'));
  }

  showDiagnostics(diagnostics: Diagnostic[]): void {
    this.status.textContent = `${diagnostics.length} problem${diagnostics.length === 1 ? '' : 's'}`;
    this.status.dataset.state = 'invalid';
    this.diagnosticsList.replaceChildren(
      ...diagnostics.map((d) => {
        const item = document.createElement('li');
        item.className = `diagnostic diagnostic-${d.kind}`;
        item.dataset.line = String(d.line);
        item.dataset.col = String(d.col);
        item.textContent = `${d.line}:${d.col} ${d.kind}: ${d.message}`;
        item.addEventListener('click', () => this.jumpTo(d.line, d.col));
        return item;
      }),
    );
  }

  showValid(classes: string[]): void {
    this.status.textContent = classes.length
      ? `valid: ${classes.join(', ')}`
      : 'empty ruleset';
    this.status.dataset.state = 'valid';
    this.diagnosticsList.replaceChildren();
  }

  showPending(): void {
    this.status.textContent = 'checking...';
    this.status.dataset.state = 'pending';
  }

  private jumpTo(line: number, col: number): void {
    const lines = this.textarea.value.split('\n');
    let offset = 0;
    for (let i = 0; i < Math.min(line - 1, lines.length); i++) {
      offset += lines[i].length + 1;
    }
    offset += Math.max(0, col - 1);
    this.textarea.focus();
    this.textarea.setSelectionRange(offset, offset);
  }
}

/** Serialize the editor content for export; the file is the text verbatim. */
export function exportRules(text: string, filename = 'workbench.rules'): void {
  const blob = new Blob([text], { type: 'text/plain;charset=utf-8' });
  const url = URL.createObjectURL(blob);
  const link = document.createElement('a');
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}
