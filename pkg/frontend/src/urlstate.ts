/** View state carried in the URL hash so a session is restorable from a
 * link: #/case/<id>?page=2&threshold=0.8 */

export type UrlState = {
  caseId: string | null;
  page: number;
  threshold: number;
};

export const DEFAULT_THRESHOLD = 0.7;

export function parseHash(hash: string): UrlState {
  const out: UrlState = { caseId: null, page: 1, threshold: DEFAULT_THRESHOLD };
  const m = /^#\/case\/([^?]+)(\?(.*))?$/.exec(hash);
  if (!m) return out;
  out.caseId = decodeURIComponent(m[1]);
  const params = new URLSearchParams(m[3] ?? '');
  const page = Number(params.get('page'));
  if (Number.isInteger(page) && page >= 1) out.page = page;
  const t = Number(params.get('threshold'));
  if (Number.isFinite(t) && t >= 0 && t <= 1) out.threshold = t;
  return out;
}

export function buildHash(state: UrlState): string {
  if (!state.caseId) return '#/';
  const params = new URLSearchParams();
  if (state.page !== 1) params.set('page', String(state.page));
  if (state.threshold !== DEFAULT_THRESHOLD) {
    params.set('threshold', String(state.threshold));
  }
  const qs = params.toString();
  return `#/case/${encodeURIComponent(state.caseId)}${qs ? `?${qs}` : ''}`;
}
