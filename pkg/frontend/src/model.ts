// Session view model: a thin state machine over the HTTP protocol.  All
// transitions happen through server round-trips; the client holds no
// cleaning logic of its own.

import {
	AnswerChoice,
	ApiError,
	DatasetPayload,
	SessionApi,
	SessionParams,
	StatusPayload,
	Suggestion,
} from './api.js';

export type Phase =
	| 'idle'
	| 'connecting'
	| 'ready'          // suggestion on screen, waiting for the operator
	| 'submitting'
	| 'selecting'      // server is computing the next suggestion
	| 'converged'
	| 'budget_exhausted'
	| 'error';

export interface ViewState {
	phase: Phase;
	sessionId: string | null;
	status: StatusPayload | null;
	suggestion: Suggestion | null;
	staleSuggestion: boolean;
	error: string | null;
}

export type Listener = (state: ViewState) => void;
export type SleepFn = (ms: number) => Promise<void>;

const POLL_INTERVAL_MS = 1000;

export class SessionController {
	private state: ViewState = {
		phase: 'idle',
		sessionId: null,
		status: null,
		suggestion: null,
		staleSuggestion: false,
		error: null,
	};

	constructor(
		private api: SessionApi,
		private listener: Listener,
		private sleep: SleepFn = (ms) => new Promise((resolve) => setTimeout(resolve, ms)),
	) {}

	get view(): ViewState {
		return { ...this.state };
	}

	private update(patch: Partial<ViewState>): void {
		this.state = { ...this.state, ...patch };
		this.listener(this.view);
	}

	/** Create a session from an uploaded dataset and enter the loop. */
	async connect(dataset: DatasetPayload, val: number[][], params: SessionParams): Promise<void> {
		this.update({ phase: 'connecting', error: null });
		try {
			const created = await this.api.createSession(dataset, val, params);
			this.update({ sessionId: created.id });
			await this.refresh();
		} catch (err) {
			this.fail(err);
		}
	}

	/** Attach to an existing session id. */
	async attach(sessionId: string): Promise<void> {
		this.update({ phase: 'connecting', sessionId, error: null });
		await this.refresh();
	}

	/** Pull status and, unless finished, the pending suggestion. */
	async refresh(): Promise<void> {
		const id = this.state.sessionId;
		if (!id) return;
		try {
			const status = await this.api.status(id);
			if (status.status === 'converged' || status.status === 'budget_exhausted') {
				this.update({ phase: status.status, status, suggestion: null, staleSuggestion: false });
				return;
			}
			this.update({ phase: 'selecting', status });
			const suggestion = await this.pollSuggestion(id);
			this.update({ phase: 'ready', suggestion, staleSuggestion: false });
		} catch (err) {
			this.fail(err);
		}
	}

	private async pollSuggestion(id: string): Promise<Suggestion> {
		// the server either blocks or answers 202-retry while selecting
		for (;;) {
			try {
				return await this.api.suggestion(id);
			} catch (err) {
				if (err instanceof ApiError && err.status === 202) {
					await this.sleep(POLL_INTERVAL_MS);
					continue;
				}
				throw err;
			}
		}
	}

	/** Submit the operator's choice for the suggestion on screen. */
	async answer(choice: AnswerChoice): Promise<void> {
		const { sessionId, suggestion } = this.state;
		if (!sessionId || !suggestion) return;
		this.update({ phase: 'submitting' });
		try {
			await this.api.answer(sessionId, suggestion.row, suggestion.step, choice);
			await this.refresh();
		} catch (err) {
			if (err instanceof ApiError && err.status === 409) {
				// the server moved on (another client answered): prompt a refresh
				this.update({ phase: 'ready', staleSuggestion: true });
				return;
			}
			this.fail(err);
		}
	}

	private fail(err: unknown): void {
		const message = err instanceof Error ? err.message : String(err);
		this.update({ phase: 'error', error: message });
	}
}
