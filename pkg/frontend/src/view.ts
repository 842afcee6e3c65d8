// DOM rendering. The view is a pure function of UiSessionState plus the
// patient/researcher mode flag; user events are forwarded to the controller.

import { SessionController, UiSessionState } from './session.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ConsultationView {
  private root: HTMLElement;
  private controller: SessionController;
  private researcherMode = false;
  private panelOpen = false;

  constructor(root: HTMLElement, controller: SessionController) {
    this.root = root;
    this.controller = controller;
    controller.subscribe((state) => this.render(state));
    this.render(controller.state);
  }

  private render(state: UiSessionState): void {
    this.root.replaceChildren();

    const header = el('header');
    header.append(el('h1', undefined, 'Consultation'));
    const modeLabel = el('label', 'mode-toggle');
    const modeBox = el('input') as HTMLInputElement;
    modeBox.type = 'checkbox';
    modeBox.checked = this.researcherMode;
    modeBox.addEventListener('change', () => {
      this.researcherMode = modeBox.checked;
      this.panelOpen = modeBox.checked;
      this.render(state);
    });
    modeLabel.append(modeBox, document.createTextNode(' researcher mode'));
    header.append(modeLabel);
    this.root.append(header);

    if (state.banner) {
      const banner = el('div', 'banner', state.banner);
      if (state.pendingAnswer !== null && state.phase === 'active') {
        const retry = el('button', undefined, 'Retry');
        retry.addEventListener('click', () => void this.controller.retryPending());
        banner.append(' ', retry);
      }
      if (state.phase === 'error') {
        const retry = el('button', undefined, 'Retry');
        retry.addEventListener('click', () => {
          this.controller.reset();
          void this.controller.start();
        });
        banner.append(' ', retry);
      }
      this.root.append(banner);
    }

    if (state.phase === 'idle' || state.phase === 'error') {
      const start = el('button', 'start', 'Start consultation');
      start.addEventListener('click', () => void this.controller.start());
      this.root.append(start);
      return;
    }
    if (state.phase === 'starting') {
      this.root.append(el('p', 'muted', 'Contacting the service...'));
      return;
    }
    if (state.phase === 'expired') {
      const restart = el('button', 'start', 'Start a new consultation');
      restart.addEventListener('click', () => {
        this.controller.reset();
        void this.controller.start();
      });
      this.root.append(restart);
      return;
    }

    this.root.append(this.transcriptList(state));

    if (state.phase === 'active' && state.question !== null) {
      this.root.append(this.questionCard(state));
      if (this.researcherMode) this.root.append(this.candidatePanel(state));
    } else {
      const badge = state.phase === 'turn-limit' ? 'turn-limit' : 'concluded';
      const conclusionView = el('section', 'conclusion');
      conclusionView.append(el('span', `badge badge-${badge}`, badge));
      conclusionView.append(el('p', undefined, state.conclusion ?? '(no conclusion provided)'));
      this.root.append(conclusionView);
    }
  }

  private transcriptList(state: UiSessionState): HTMLElement {
    const section = el('section', 'transcript');
    for (const entry of state.transcript) {
      const row = el('div', 'turn');
      row.append(el('span', 'turn-no', `#${entry.turn}`));
      const body = el('div');
      body.append(el('p', 'question', entry.question));
      body.append(el('p', 'answer', entry.answer ?? ''));
      row.append(body);
      row.append(el('span', `badge badge-${entry.source}`, entry.source));
      section.append(row);
    }
    return section;
  }

  private questionCard(state: UiSessionState): HTMLElement {
    const card = el('section', 'question-card');
    card.append(el('p', 'question current', state.question ?? ''));

    const controls = el('div', 'controls');
    for (const value of ['yes', 'no']) {
      const button = el('button', `answer-${value}`, value);
      button.disabled = !state.controlsEnabled;
      button.addEventListener('click', () => void this.controller.submitAnswer(value));
      controls.append(button);
    }
    const free = el('input') as HTMLInputElement;
    free.type = 'text';
    free.placeholder = 'or answer in your own words';
    free.disabled = !state.controlsEnabled;
    const send = el('button', undefined, 'Send');
    send.disabled = !state.controlsEnabled;
    send.addEventListener('click', () => {
      if (free.value.trim()) void this.controller.submitAnswer(free.value.trim());
    });
    controls.append(free, send);
    card.append(controls);
    return card;
  }

  private candidatePanel(state: UiSessionState): HTMLElement {
    const panel = el('section', 'candidates');
    const toggle = el('button', 'panel-toggle', this.panelOpen ? 'hide candidates' : 'show candidates');
    toggle.addEventListener('click', () => {
      this.panelOpen = !this.panelOpen;
      this.render(state);
    });
    panel.append(toggle);
    if (this.panelOpen) {
      for (const candidate of state.candidates) {
        const row = el('div', candidate.selected ? 'candidate selected' : 'candidate');
        row.append(el('span', `badge badge-${candidate.source}`, candidate.source));
        row.append(el('span', undefined, candidate.text));
        panel.append(row);
      }
    }
    return panel;
  }
}
