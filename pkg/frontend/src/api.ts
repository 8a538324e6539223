// Typed client for the cleaning-session HTTP protocol.  The UI never
// computes selection, entropy, or certainty itself: every number it shows
// originates from these payloads.

export interface DatasetRowPayload {
	label: number;
	candidates: number[][];
	display?: string[] | null;
}

export interface DatasetPayload {
	num_labels: number;
	dimension: number;
	rows: DatasetRowPayload[];
}

export interface SessionParams {
	k?: number;
	kernel?: string;
	engine?: string;
	budget?: number | null;
}

export interface CreateResponse {
	id: string;
	status: SessionStatusName;
	pct_cp: number;
}

export type SessionStatusName =
	| 'selecting'
	| 'awaiting_answer'
	| 'converged'
	| 'budget_exhausted';

export interface Suggestion {
	row: number;
	expected_entropy: number;
	candidates: number[][];
	display: string[] | null;
	step: number;
	pct_cp: number;
	mean_entropy: number;
	status: SessionStatusName;
}

export interface StepRecord {
	step: number;
	selected_row: number;
	expected_entropy: number | null;
	realized_mean_entropy: number | null;
	pct_val_cp: number;
	cleaned_count: number;
	free_form?: boolean;
}

export interface AnswerResponse {
	status: SessionStatusName;
	record: StepRecord;
	pct_cp: number;
}

export interface StatusPayload {
	status: SessionStatusName;
	pct_cp: number;
	per_point_cp: boolean[];
	mean_entropy: number;
	cleaned_count: number;
	history: StepRecord[];
}

export interface ExportPayload {
	dataset: DatasetPayload;
	converged: boolean;
	not_converged: boolean;
	world: { X: number[][]; y: number[] } | null;
}

export type AnswerChoice = { candidate: number } | { value: number[] };

export class ApiError extends Error {
	constructor(
		public status: number,
		public code: string,
		message: string,
	) {
		super(message);
	}
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
	constructor(
		private baseUrl: string,
		private fetchFn: FetchLike = (...args) => fetch(...args),
	) {}

	private async request<T>(path: string, init?: RequestInit): Promise<T> {
		const response = await this.fetchFn(this.baseUrl + path, init);
		const body = await response.json().catch(() => ({}));
		// 202 means "still selecting, retry": surface it as a typed error
		if (!response.ok || response.status === 202) {
			throw new ApiError(response.status, body.code ?? 'error', body.message ?? 'request failed');
		}
		return body as T;
	}

	createSession(dataset: DatasetPayload, val: number[][], params: SessionParams): Promise<CreateResponse> {
		return this.request('/sessions', {
			method: 'POST',
			headers: { 'content-type': 'application/json' },
			body: JSON.stringify({ dataset, val, params }),
		});
	}

	suggestion(id: string): Promise<Suggestion> {
		return this.request(`/sessions/${id}/suggestion`);
	}

	answer(id: string, row: number, step: number, choice: AnswerChoice): Promise<AnswerResponse> {
		return this.request(`/sessions/${id}/answer`, {
			method: 'POST',
			headers: { 'content-type': 'application/json' },
			body: JSON.stringify({ row, step, ...choice }),
		});
	}

	status(id: string): Promise<StatusPayload> {
		return this.request(`/sessions/${id}/status`);
	}

	exportUrl(id: string): string {
		return `${this.baseUrl}/sessions/${id}/export`;
	}
}
