// Browser bootstrap: wires the controller and renderers to the DOM.  All
// interaction flows through SessionController; this file only translates
// clicks into controller calls and re-renders on state changes.

import { SessionApi } from './api.js';
import { SessionController } from './model.js';
import { renderApp } from './render.js';

function mount(root: HTMLElement, baseUrl: string): SessionController {
	const api = new SessionApi(baseUrl);
	const controller = new SessionController(api, (state) => {
		const exportUrl = state.sessionId ? api.exportUrl(state.sessionId) : null;
		root.innerHTML = renderApp(state, exportUrl);
	});

	root.addEventListener('click', (event) => {
		const target = event.target as HTMLElement;
		if (target.matches('button.candidate')) {
			const index = Number(target.dataset.candidate);
			void controller.answer({ candidate: index });
		} else if (target.matches('button.refresh')) {
			void controller.refresh();
		}
	});

	root.addEventListener('submit', (event) => {
		const form = event.target as HTMLFormElement;
		if (!form.matches('form.free-form')) return;
		event.preventDefault();
		const input = form.elements.namedItem('value') as HTMLInputElement;
		const vector = input.value.split(',').map((part) => Number(part.trim()));
		if (vector.some(Number.isNaN)) return;
		void controller.answer({ value: vector });
	});

	return controller;
}

declare global {
	interface Window {
		cleaningUi: {
			mount: typeof mount;
		};
	}
}

if (typeof window !== 'undefined') {
	window.cleaningUi = { mount };
}

export { mount };
