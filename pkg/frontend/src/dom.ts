// DOM rendering for the three screens. No state is kept here beyond the
// latest view model; main.ts owns the session flow.

import { SessionView } from "./model.js";
import { describeOffer } from "./offers.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

export function renderSetup(root: HTMLElement, categories: string[], onStart: (target: number[]) => void, error?: string): void {
    root.innerHTML = "";
    const panel = el("div", "panel setup");
    panel.appendChild(el("h2", undefined, "Choose your target allocation"));
    panel.appendChild(el("p", undefined, "You start with 50 of each. Pick the amounts (0–100) you want to end with."));
    const inputs: HTMLInputElement[] = [];
    for (const label of categories) {
        const row = el("label", "target-row", `${label} `);
        const input = document.createElement("input");
        input.type = "number";
        input.min = "0";
        input.max = "100";
        input.step = "1";
        input.value = "50";
        row.appendChild(input);
        inputs.push(input);
        panel.appendChild(row);
    }
    if (error) panel.appendChild(el("p", "error", error));
    const button = el("button", "primary", "Start trading") as HTMLButtonElement;
    button.onclick = () => onStart(inputs.map((i) => Number(i.value)));
    panel.appendChild(button);
    root.appendChild(panel);
}

export interface TradingHandlers {
    onAccept: () => void,
    onReject: () => void,
    onCounter: (give: Record<string, number>, receive: Record<string, number>) => void,
    onEnd: () => void,
}

export function renderTrading(root: HTMLElement, view: SessionView, handlers: TradingHandlers): void {
    root.innerHTML = "";
    const panel = el("div", "panel trading");

    const clock = el("div", "clock", `Time left: ${Math.ceil(view.timeRemaining)}s`);
    panel.appendChild(clock);

    const alloc = el("table", "allocation");
    const head = el("tr");
    head.appendChild(el("th", undefined, ""));
    view.categories.forEach((c) => head.appendChild(el("th", undefined, c)));
    alloc.appendChild(head);
    const mine = el("tr");
    mine.appendChild(el("td", undefined, "you"));
    view.allocation.forEach((v) => mine.appendChild(el("td", "amount", String(v))));
    alloc.appendChild(mine);
    panel.appendChild(alloc);

    if (view.offer) {
        const card = el("div", "offer-card");
        card.appendChild(el("h3", undefined, "Trade offer"));
        card.appendChild(el("p", "offer-text", describeOffer(view.offer)));
        card.appendChild(el("p", "countdown", `Respond within ${Math.ceil(view.offerExpiresIn)}s`));
        const accept = el("button", "accept", "Accept") as HTMLButtonElement;
        accept.onclick = handlers.onAccept;
        const reject = el("button", "reject", "Reject") as HTMLButtonElement;
        reject.onclick = handlers.onReject;
        card.appendChild(accept);
        card.appendChild(reject);

        const counter = el("div", "counter-form");
        counter.appendChild(el("h4", undefined, "…or counter"));
        const giveInputs: Record<string, HTMLInputElement> = {};
        const receiveInputs: Record<string, HTMLInputElement> = {};
        for (const [column, store] of [["you give", giveInputs], ["you receive", receiveInputs]] as const) {
            const row = el("div", "counter-row", `${column}: `);
            for (const label of view.categories) {
                const wrap = el("label", undefined, ` ${label} `);
                const input = document.createElement("input");
                input.type = "number";
                input.min = "0";
                input.step = "1";
                input.value = "0";
                wrap.appendChild(input);
                store[label] = input;
                row.appendChild(wrap);
            }
            counter.appendChild(row);
        }
        const send = el("button", "counter", "Send counteroffer") as HTMLButtonElement;
        send.onclick = () => {
            const collect = (inputs: Record<string, HTMLInputElement>) =>
                Object.fromEntries(Object.entries(inputs).map(([k, i]) => [k, Number(i.value) || 0]));
            handlers.onCounter(collect(giveInputs), collect(receiveInputs));
        };
        counter.appendChild(send);
        card.appendChild(counter);
        panel.appendChild(card);
    }

    const historyBox = el("div", "history");
    historyBox.appendChild(el("h4", undefined, "History"));
    for (const entry of view.history) {
        historyBox.appendChild(
            el("div", `history-entry ${entry.response}`, `#${entry.token} ${describeOffer(entry.offer)} → ${entry.response}`),
        );
    }
    panel.appendChild(historyBox);

    const end = el("button", "end", "End session") as HTMLButtonElement;
    end.onclick = handlers.onEnd;
    panel.appendChild(end);
    root.appendChild(panel);
}

export function renderResults(root: HTMLElement, view: SessionView): void {
    root.innerHTML = "";
    const panel = el("div", "panel results");
    panel.appendChild(el("h2", undefined, "Session over"));
    if (view.score) {
        panel.appendChild(el("p", "score", `Score: ${view.score.percent}%`));
        panel.appendChild(el("p", "score-raw", `Raw improvement: ${view.score.raw.toFixed(4)}`));
        const bars = el("div", "bars");
        view.categories.forEach((label, i) => {
            const row = el("div", "bar-row", `${label}: ${view.allocation[i]} (target ${view.humanTarget[i]})`);
            const bar = el("div", "bar");
            bar.style.width = `${Math.min(100, view.allocation[i])}%`;
            row.appendChild(bar);
            const target = el("div", "bar target");
            target.style.width = `${Math.min(100, view.humanTarget[i])}%`;
            row.appendChild(target);
            bars.appendChild(row);
        });
        panel.appendChild(bars);
    }
    if (view.terminalReason) {
        panel.appendChild(el("p", "reason", `Ended: ${view.terminalReason}`));
    }
    root.appendChild(panel);
}
