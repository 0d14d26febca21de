import type { ApiClient } from './api.js';
import { debounce } from './debounce.js';
import type {
  Candidate,
  CaseSummary,
  Finding,
  OverrideAction,
} from './types.js';

export const THRESHOLD_DEBOUNCE_MS = 250;

export type CaseState = {
  summary: CaseSummary | null;
  findings: Finding[];
  page: number;
  pageSize: number;
  totalFindings: number;
  threshold: number;
  candidates: Candidate[];
  loading: boolean;
  error: string | null;
};

type Listener = (state: CaseState) => void;

/** Holds everything the view renders. All numbers come from service
 * responses; the store never derives scores or counts on its own. Slider
 * moves are debounced; stale candidate responses are dropped so the list
 * always matches the latest acknowledged threshold. */
export class CaseStore {
  private state: CaseState;
  private listeners: Listener[] = [];
  private candidatesEpoch = 0;
  private debouncedFetch: ReturnType<typeof debounce<[number]>>;

  constructor(
    private api: ApiClient,
    private caseId: string,
    initialThreshold = 0.7,
    debounceMs = THRESHOLD_DEBOUNCE_MS,
  ) {
    this.state = {
      summary: null,
      findings: [],
      page: 1,
      pageSize: 50,
      totalFindings: 0,
      threshold: initialThreshold,
      candidates: [],
      loading: false,
      error: null,
    };
    this.debouncedFetch = debounce(
      (t: number) => void this.fetchCandidates(t),
      debounceMs,
    );
  }

  getState(): CaseState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private update(patch: Partial<CaseState>) {
    this.state = { ...this.state, ...patch };
    for (const l of this.listeners) l(this.state);
  }

  async load(page = this.state.page): Promise<void> {
    this.update({ loading: true, error: null });
    try {
      const [summary, findings] = await Promise.all([
        this.api.getCase(this.caseId),
        this.api.getFindings(this.caseId, {
          page,
          pageSize: this.state.pageSize,
        }),
      ]);
      this.update({
        summary,
        findings: findings.items,
        page: findings.page,
        totalFindings: findings.total,
        loading: false,
      });
      await this.fetchCandidates(this.state.threshold);
    } catch (e) {
      this.update({ loading: false, error: String(e) });
    }
  }

  /** Slider input: state updates immediately, the fetch is debounced. */
  setThreshold(t: number): void {
    this.update({ threshold: t });
    this.debouncedFetch(t);
  }

  private async fetchCandidates(t: number): Promise<void> {
    const epoch = ++this.candidatesEpoch;
    try {
      const res = await this.api.getCandidates(this.caseId, t);
      if (epoch !== this.candidatesEpoch) return; // superseded
      this.update({ candidates: res.candidates, error: null });
    } catch (e) {
      if (epoch !== this.candidatesEpoch) return;
      this.update({ error: String(e) });
    }
  }

  /** Override then re-sync: the server echo replaces the local finding and
   * the candidate list is re-fetched at the active threshold. */
  async applyOverride(
    findingId: string,
    action: OverrideAction,
    setClass: string | null = null,
  ): Promise<void> {
    try {
      const res = await this.api.postOverride(
        this.caseId,
        findingId,
        action,
        setClass,
      );
      if (res.finding) {
        const updated = res.finding;
        this.update({
          findings: this.state.findings.map((f) =>
            f.finding_id === updated.finding_id
              ? { ...updated, overridden: action !== 'RESTORE' }
              : f,
          ),
          error: null,
        });
      }
      await this.fetchCandidates(this.state.threshold);
    } catch (e) {
      this.update({ error: String(e) });
    }
  }

  async setPage(page: number): Promise<void> {
    if (page < 1) return;
    try {
      const findings = await this.api.getFindings(this.caseId, {
        page,
        pageSize: this.state.pageSize,
      });
      this.update({
        findings: findings.items,
        page: findings.page,
        totalFindings: findings.total,
        error: null,
      });
    } catch (e) {
      this.update({ error: String(e) });
    }
  }

  dispose(): void {
    this.debouncedFetch.cancel();
    this.listeners = [];
  }
}
