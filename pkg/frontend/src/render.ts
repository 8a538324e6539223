// Pure HTML renderers.  Numbers are interpolated verbatim (String(v), no
// rounding or arithmetic) so the screen shows exactly what the server sent.

import { StepRecord, Suggestion } from './api.js';
import { ViewState } from './model.js';

function escapeHtml(text: string): string {
	return text
		.replace(/&/g, '&amp;')
		.replace(/</g, '&lt;')
		.replace(/>/g, '&gt;')
		.replace(/"/g, '&quot;');
}

export function renderSuggestion(suggestion: Suggestion): string {
	const cards = suggestion.candidates
		.map((vector, index) => {
			const label = suggestion.display?.[index]
				? escapeHtml(suggestion.display[index])
				: `[${vector.map(String).join(', ')}]`;
			return `<button class="candidate" data-candidate="${index}">${label}</button>`;
		})
		.join('\n');
	return [
		`<section class="suggestion" data-row="${suggestion.row}" data-step="${suggestion.step}">`,
		`<h2>Clean record #${suggestion.row}</h2>`,
		`<p class="expected-entropy">expected entropy ${String(suggestion.expected_entropy)}</p>`,
		cards,
		`<form class="free-form"><input name="value" placeholder="comma-separated true value">` +
			`<button type="submit">submit value</button></form>`,
		`</section>`,
	].join('\n');
}

export function renderStatusBar(pctCp: number, meanEntropy: number, cleaned: number): string {
	return (
		`<div class="status-bar">` +
		`<span class="pct-cp">${String(pctCp)}</span>` +
		`<span class="mean-entropy">${String(meanEntropy)}</span>` +
		`<span class="cleaned-count">${String(cleaned)}</span>` +
		`</div>`
	);
}

/** Line chart of %CP'ed and mean entropy over steps, as inline SVG. */
export function renderProgress(history: StepRecord[], initialPct: number | null): string {
	if (history.length === 0 && initialPct === null) {
		return `<svg class="progress" viewBox="0 0 100 40"><text x="4" y="22">no steps yet</text></svg>`;
	}
	const pct = history.map((r) => r.pct_val_cp);
	if (initialPct !== null) pct.unshift(initialPct);
	const entropy = history
		.map((r) => r.realized_mean_entropy)
		.filter((v): v is number => v !== null);
	const maxEntropy = entropy.reduce((a, b) => Math.max(a, b), 0) || 1;
	const x = (i: number, n: number) => (n <= 1 ? 0 : (100 * i) / (n - 1));
	const cpPoints = pct.map((v, i) => `${x(i, pct.length)},${40 - 40 * v}`).join(' ');
	const entropyPoints = entropy
		.map((v, i) => `${x(i, entropy.length)},${40 - (40 * v) / maxEntropy}`)
		.join(' ');
	return [
		`<svg class="progress" viewBox="0 0 100 40">`,
		`<polyline class="cp-line" fill="none" points="${cpPoints}"/>`,
		entropy.length > 0
			? `<polyline class="entropy-line" fill="none" points="${entropyPoints}"/>`
			: '',
		`</svg>`,
	].join('');
}

export function renderHistory(history: StepRecord[]): string {
	const rows = history
		.map((record) => {
			const badge = record.free_form ? `<span class="badge free-form">typed value</span>` : '';
			return (
				`<tr><td>${String(record.step)}</td><td>#${String(record.selected_row)}</td>` +
				`<td>${String(record.pct_val_cp)}</td>` +
				`<td>${record.realized_mean_entropy === null ? '' : String(record.realized_mean_entropy)}</td>` +
				`<td>${badge}</td></tr>`
			);
		})
		.join('\n');
	return `<table class="history"><thead><tr><th>step</th><th>record</th><th>%CP</th><th>entropy</th><th></th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderApp(state: ViewState, exportUrl: string | null): string {
	const parts: string[] = [];
	if (state.phase === 'error') {
		parts.push(`<div class="banner error">${escapeHtml(state.error ?? 'unknown error')}</div>`);
	}
	if (state.staleSuggestion) {
		parts.push(
			`<div class="banner stale">The server moved on to another record. ` +
				`<button class="refresh">refresh</button></div>`,
		);
	}
	if (state.status) {
		parts.push(renderStatusBar(state.status.pct_cp, state.status.mean_entropy, state.status.cleaned_count));
		parts.push(renderProgress(state.status.history, null));
		parts.push(renderHistory(state.status.history));
	}
	if (state.phase === 'converged') {
		const link = exportUrl
			? `<a class="export enabled" href="${exportUrl}">download cleaned dataset</a>`
			: '';
		parts.push(`<div class="done">All validation points certainly predicted. ${link}</div>`);
	} else if (state.phase === 'budget_exhausted') {
		parts.push(`<div class="done">Cleaning budget exhausted.</div>`);
	} else if (state.phase === 'selecting' || state.phase === 'connecting') {
		parts.push(`<div class="spinner">selecting the next record…</div>`);
	} else if (state.suggestion && state.phase === 'ready') {
		parts.push(renderSuggestion(state.suggestion));
	}
	// the export control is present but disabled until convergence
	if (state.phase !== 'converged' && state.status) {
		parts.push(`<a class="export disabled" aria-disabled="true">download cleaned dataset</a>`);
	}
	return `<main class="cleaning-ui" data-phase="${state.phase}">${parts.join('\n')}</main>`;
}
