// Application wiring: setup screen -> trading loop -> results. One session
// per tab; every mutation is a sequential tokened call to the service.

import { SessionApi, SessionSnapshot } from "./api.js";
import { renderResults, renderSetup, renderTrading } from "./dom.js";
import { buildSessionView, validTarget } from "./model.js";
import { buildCounterDelta } from "./offers.js";

const CATEGORIES = ["apples", "bananas", "oranges"];
const api = new SessionApi((window as any).CONETRADE_API ?? "");
const root = document.getElementById("app") as HTMLElement;

let sessionId: string | null = null;
let countdown: number | undefined;

function show(snapshot: SessionSnapshot): void {
    const view = buildSessionView(snapshot);
    if (view.terminal) {
        window.clearInterval(countdown);
        renderResults(root, view);
        return;
    }
    renderTrading(root, view, {
        onAccept: () => answer(view.offer!.token, "accept"),
        onReject: () => answer(view.offer!.token, "reject"),
        onCounter: (give, receive) =>
            answer(view.offer!.token, "counter", buildCounterDelta(give, receive, view.categories)),
        onEnd: endSession,
    });
    armCountdown(view.offer ? view.offer.token : null, view.offerExpiresIn);
}

function armCountdown(token: number | null, expiresIn: number): void {
    window.clearInterval(countdown);
    if (token === null) return;
    const deadline = Date.now() + expiresIn * 1000;
    countdown = window.setInterval(() => {
        if (Date.now() >= deadline) {
            window.clearInterval(countdown);
            // auto-submit a rejection at the 120 s limit; the server records
            // the timeout tag on its side of the clock
            answer(token, "reject");
        }
    }, 1000);
}

async function answer(token: number, action: "accept" | "reject" | "counter", counter?: number[]): Promise<void> {
    if (sessionId === null) return;
    try {
        show(await api.respond(sessionId, token, action, counter));
    } catch (err) {
        // stale token or a lost race with the timeout: refetch authoritative state
        show(await api.getSession(sessionId));
    }
}

async function endSession(): Promise<void> {
    if (sessionId === null) return;
    show(await api.endSession(sessionId));
}

function boot(): void {
    renderSetup(root, CATEGORIES, start);
}

async function start(target: number[]): Promise<void> {
    const problem = validTarget(target, CATEGORIES.length);
    if (problem !== null) {
        renderSetup(root, CATEGORIES, start, problem);
        return;
    }
    const snapshot = await api.createSession({ human_target: target });
    sessionId = snapshot.id;
    show(snapshot);
}

boot();
