export type Stage =
  | "controlled"
  | "condensed"
  | "conjectured"
  | "constructed"
  | "concluded"
  | "classified"
  | "confirmed"
  | "rejected";

export type Category = "conclusive" | "interpretive";

export interface DraftSummary {
  draft_id: string;
  stage: Stage;
  question_preview: string;
  proposed_category: Category | null;
}

export interface QueuePage {
  items: DraftSummary[];
  total: number;
  page: number;
  page_size: number;
}

export interface ReviewLogEntry {
  timestamp: string;
  actor: string;
  action: string;
  note: string;
}

export interface TablePreview {
  row_count: number;
  columns: string[];
  rows: (string | null)[][];
}

export interface DraftDetail {
  draft_id: string;
  db_id: string;
  seed_question: string;
  stage: Stage;
  question_text: string;
  source_keywords: string[];
  conjecture: string | null;
  injected_inserts: string[] | null;
  reference_text: string | null;
  proposed_category: Category | null;
  review_log: ReviewLogEntry[];
  preview: { tables: Record<string, TablePreview> } | null;
}

export type ActionName = "approve" | "edit" | "reject" | "set_category";

export interface ActionBody {
  action: ActionName;
  payload?: string;
  actor?: string;
}
