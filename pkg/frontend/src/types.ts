/** Mirrors of the service's JSON payloads. The client never recomputes any
 * of these numbers; everything rendered comes straight from the API. */

export type PipelineConfig = {
  det_conf_min: number;
  clf_threshold: number;
  crop_pad_fraction: number;
  nms_iou: number;
};

export type CaseSummary = {
  case_id: string;
  title: string;
  created_at: string;
  config: PipelineConfig;
  kb_version: string;
};

export type FindingStatus = 'VALID' | 'NOISE' | 'BELOW_THRESHOLD' | 'NA_FILTERED';

export type Finding = {
  finding_id: string;
  image_id: string;
  bbox: [number, number, number, number];
  det_conf: number;
  probs: Record<string, number>;
  top_class: string;
  top_prob: number;
  status: FindingStatus;
  overridden: boolean;
  crop_url: string;
};

export type FindingsPage = {
  items: Finding[];
  page: number;
  page_size: number;
  total: number;
};

export type Candidate = {
  country: string;
  country_name: string;
  score: number;
  supporting: string[];
  intersection: boolean;
};

export type CandidatesResponse = {
  threshold: number;
  candidates: Candidate[];
};

export type OverrideAction = 'MARK_NOISE' | 'SET_CLASS' | 'RESTORE';

export type OverrideRecord = {
  finding_id: string;
  action: OverrideAction;
  set_class: string | null;
  actor: string;
  at: string;
};

export type OverrideResponse = {
  override: OverrideRecord;
  finding: Finding | null;
};

export type KbView = {
  version: string;
  entries: Record<string, string[]>;
};

export type BoundaryFeature = {
  type: 'Feature';
  properties: { code: string };
  geometry:
    | { type: 'Polygon'; coordinates: number[][][] }
    | { type: 'MultiPolygon'; coordinates: number[][][][] };
};

export type BoundaryCollection = {
  type: 'FeatureCollection';
  features: BoundaryFeature[];
};
