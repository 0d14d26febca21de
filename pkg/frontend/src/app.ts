import { ApiClient } from './api.js';
import { renderMap } from './map.js';
import { CaseStore, type CaseState } from './store.js';
import type { BoundaryCollection, Finding } from './types.js';
import { buildHash, parseHash } from './urlstate.js';

const api = new ApiClient();

let store: CaseStore | null = null;
let boundaries: BoundaryCollection | null = null;
let plugClasses: string[] = [];
let selectedIndex = 0;

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

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function syncUrl() {
  if (!store) return;
  const s = store.getState();
  const hash = buildHash({
    caseId: s.summary?.case_id ?? null,
    page: s.page,
    threshold: s.threshold,
  });
  if (location.hash !== hash) history.replaceState(null, '', hash);
}

function statusBadge(f: Finding): HTMLElement {
  const badge = el('span', `badge badge-${f.status.toLowerCase()}`, f.status);
  if (f.status === 'BELOW_THRESHOLD') badge.classList.add('badge-dim');
  return badge;
}

function probTable(f: Finding): HTMLElement {
  const table = el('table', 'probs');
  const entries = Object.entries(f.probs).sort((a, b) => b[1] - a[1]);
  for (const [cls, p] of entries.slice(0, 5)) {
    const row = el('tr');
    row.appendChild(el('td', undefined, cls));
    row.appendChild(el('td', undefined, p.toFixed(4)));
    table.appendChild(row);
  }
  return table;
}

function findingCard(f: Finding, index: number): HTMLElement {
  const card = el('article', 'card');
  card.tabIndex = 0;
  card.dataset.index = String(index);
  if (index === selectedIndex) card.classList.add('selected');
  if (f.overridden) card.classList.add('overridden');

  const img = el('img', 'crop');
  img.src = api.cropUrl(f);
  img.alt = `socket crop ${f.finding_id}`;
  card.appendChild(img);

  const header = el('div', 'card-header');
  header.appendChild(el('strong', undefined, f.top_class));
  header.appendChild(el('span', 'prob', f.top_prob.toFixed(3)));
  header.appendChild(statusBadge(f));
  if (f.overridden) header.appendChild(el('span', 'badge badge-override', 'overridden'));
  card.appendChild(header);

  card.appendChild(el('div', 'finding-id', f.finding_id));
  card.appendChild(probTable(f));

  const actions = el('div', 'actions');
  const noiseBtn = el('button', undefined, 'Mark noise');
  noiseBtn.onclick = () => void store?.applyOverride(f.finding_id, 'MARK_NOISE');
  const restoreBtn = el('button', undefined, 'Restore');
  restoreBtn.onclick = () => void store?.applyOverride(f.finding_id, 'RESTORE');
  const select = el('select');
  select.appendChild(new Option('Set class…', ''));
  for (const cls of plugClasses) select.appendChild(new Option(cls, cls));
  select.onchange = () => {
    if (select.value) void store?.applyOverride(f.finding_id, 'SET_CLASS', select.value);
  };
  actions.append(noiseBtn, restoreBtn, select);
  card.appendChild(actions);

  card.onfocus = () => {
    selectedIndex = index;
    document
      .querySelectorAll('.card.selected')
      .forEach((c) => c.classList.remove('selected'));
    card.classList.add('selected');
  };
  return card;
}

function render(state: CaseState) {
  const gallery = $('gallery');
  gallery.replaceChildren(...state.findings.map((f, i) => findingCard(f, i)));

  $('case-title').textContent = state.summary
    ? `${state.summary.title} (${state.summary.case_id.slice(0, 8)})`
    : 'No case loaded';
  $('finding-count').textContent = `${state.totalFindings} findings`;
  $('page-label').textContent = `page ${state.page}`;

  const tValue = $('threshold-value');
  tValue.textContent = state.threshold.toFixed(2);
  const slider = $('threshold') as HTMLInputElement;
  if (Number(slider.value) !== state.threshold) slider.value = String(state.threshold);

  const list = $('candidates');
  list.replaceChildren();
  if (state.candidates.length === 0) {
    const empty = el('li', 'empty-state');
    empty.textContent = 'No candidate countries at this threshold.';
    list.appendChild(empty);
  }
  for (const c of state.candidates) {
    const item = el('li', c.intersection ? 'candidate intersection' : 'candidate');
    item.appendChild(el('span', 'code', c.country));
    item.appendChild(el('span', 'name', c.country_name));
    item.appendChild(el('span', 'score', c.score.toFixed(3)));
    item.appendChild(
      el('span', 'support', `${c.supporting.length} finding(s)`),
    );
    list.appendChild(item);
  }

  const error = $('error');
  error.textContent = state.error ?? '';
  error.hidden = !state.error;

  if (boundaries) {
    renderMap($('map') as unknown as SVGSVGElement, boundaries, state.candidates);
  }
  syncUrl();
}

function bindKeyboard() {
  document.addEventListener('keydown', (e) => {
    if (!store) return;
    const cards = Array.from(document.querySelectorAll<HTMLElement>('.card'));
    if (cards.length === 0) return;
    if (e.key === 'ArrowRight' || e.key === 'ArrowLeft') {
      e.preventDefault();
      const delta = e.key === 'ArrowRight' ? 1 : -1;
      selectedIndex = Math.min(Math.max(selectedIndex + delta, 0), cards.length - 1);
      cards[selectedIndex].focus();
    } else if (e.key === 'n') {
      const f = store.getState().findings[selectedIndex];
      if (f) void store.applyOverride(f.finding_id, 'MARK_NOISE');
    } else if (e.key === 'r') {
      const f = store.getState().findings[selectedIndex];
      if (f) void store.applyOverride(f.finding_id, 'RESTORE');
    }
  });
}

async function openCase(caseId: string, page: number, threshold: number) {
  store?.dispose();
  selectedIndex = 0;
  store = new CaseStore(api, caseId, threshold);
  store.subscribe(render);
  await store.load(page);
}

async function boot() {
  try {
    const [kb, b] = await Promise.all([api.getKb(), api.getBoundaries()]);
    plugClasses = Object.keys(kb.entries).sort();
    boundaries = b;
  } catch (e) {
    $('error').textContent = `service unreachable: ${e}`;
    $('error').hidden = false;
  }

  const slider = $('threshold') as HTMLInputElement;
  slider.addEventListener('input', () => {
    store?.setThreshold(Number(slider.value));
    $('threshold-value').textContent = Number(slider.value).toFixed(2);
  });
  $('prev-page').addEventListener('click', () => {
    if (store) void store.setPage(store.getState().page - 1);
  });
  $('next-page').addEventListener('click', () => {
    if (store) void store.setPage(store.getState().page + 1);
  });
  const form = $('case-form') as HTMLFormElement;
  form.addEventListener('submit', (e) => {
    e.preventDefault();
    const input = $('case-id') as HTMLInputElement;
    if (input.value.trim()) {
      void openCase(input.value.trim(), 1, Number(slider.value));
    }
  });
  bindKeyboard();

  const initial = parseHash(location.hash);
  if (initial.caseId) {
    ($('case-id') as HTMLInputElement).value = initial.caseId;
    slider.value = String(initial.threshold);
    await openCase(initial.caseId, initial.page, initial.threshold);
  }
}

document.addEventListener('DOMContentLoaded', () => void boot());
