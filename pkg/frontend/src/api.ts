import type {
  BoundaryCollection,
  CandidatesResponse,
  CaseSummary,
  Finding,
  FindingsPage,
  KbView,
  OverrideAction,
  OverrideRecord,
  OverrideResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = typeof fetch;

/** Thin typed wrapper over the case service. Injectable fetch for tests. */
export class ApiClient {
  constructor(
    private baseUrl = '',
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      headers: { 'Content-Type': 'application/json', ...(init?.headers ?? {}) },
      ...init,
    });
    if (!res.ok) {
      let code = 'error';
      let message = `${res.status} ${res.statusText}`;
      try {
        const body = (await res.json()) as { code?: string; message?: string };
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, code, message);
    }
    return (await res.json()) as T;
  }

  getCase(caseId: string): Promise<CaseSummary> {
    return this.request(`/cases/${caseId}`);
  }

  getFindings(
    caseId: string,
    opts: { status?: string; page?: number; pageSize?: number } = {},
  ): Promise<FindingsPage> {
    const params = new URLSearchParams();
    if (opts.status) params.set('status', opts.status);
    if (opts.page) params.set('page', String(opts.page));
    if (opts.pageSize) params.set('page_size', String(opts.pageSize));
    const qs = params.toString();
    return this.request(`/cases/${caseId}/findings${qs ? `?${qs}` : ''}`);
  }

  getCandidates(caseId: string, threshold: number): Promise<CandidatesResponse> {
    return this.request(`/cases/${caseId}/candidates?threshold=${threshold}`);
  }

  postOverride(
    caseId: string,
    findingId: string,
    action: OverrideAction,
    setClass: string | null = null,
    actor = 'webui',
  ): Promise<OverrideResponse> {
    return this.request(`/cases/${caseId}/overrides`, {
      method: 'POST',
      body: JSON.stringify({
        finding_id: findingId,
        action,
        set_class: setClass,
        actor,
      }),
    });
  }

  getOverrides(caseId: string): Promise<{ overrides: OverrideRecord[] }> {
    return this.request(`/cases/${caseId}/overrides`);
  }

  getKb(): Promise<KbView> {
    return this.request('/kb');
  }

  getBoundaries(): Promise<BoundaryCollection> {
    return this.request('/boundaries');
  }

  cropUrl(finding: Finding): string {
    return this.baseUrl + finding.crop_url;
  }
}
