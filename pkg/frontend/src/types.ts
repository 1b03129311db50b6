// Mirrors of the review service's wire format. Field names are the HTTP
// contract; nothing here is renamed or reshaped on the client.

export interface ProposalView {
  proposal_id: string;
  source_sample_id: string;
  source_image_ref: string;
  source: string;
  scenario: string;
  logic_type: string;
  candidates: string[];
  backend: string;
  request: string;
  status: string;
  note: string;
  first_is_correct: boolean;
  diagnostics: string[];
  created_at: number;
  updated_at: number;
}

export interface ProposalPage {
  proposals: ProposalView[];
  total: number;
  limit: number;
  offset: number;
}

export interface StatsPayload {
  counts: Record<string, number>;
  total: number;
  by_logic_type: Record<string, Record<string, number>>;
  event_count: number;
}

export interface FinalizeResult {
  path: string;
  manifest: {
    source: string;
    counts: { records: number; by_review_status: Record<string, number> };
  };
}

export type DecisionAction = "accept" | "reject" | "edit";
