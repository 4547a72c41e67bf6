// Pure view model: everything the screens display derives from the latest
// server snapshot, so the UI can never drift from the transcript.

import type { SessionSnapshot } from "./api.js";
import { OfferView, toOfferView } from "./offers.js";

export interface HistoryView {
    token: number,
    offer: OfferView,
    response: string,
    stage: string,
    allocationAfter: number[],
    tags: string[],
}

export interface ScoreView {
    raw: number,
    clamped: number,
    percent: number,  // clamped score rendered as a whole percentage
}

export interface SessionView {
    id: string,
    categories: string[],
    algorithm: string,
    allocation: number[],       // the human's current holdings
    agentAllocation: number[],
    humanTarget: number[],
    timeRemaining: number,
    offer: OfferView | null,
    offerExpiresIn: number,
    history: HistoryView[],
    terminal: boolean,
    terminalReason: string | null,
    score: ScoreView | null,
}

export function buildSessionView(snapshot: SessionSnapshot): SessionView {
    const categories = snapshot.categories;
    const history = snapshot.history.map((record) => ({
        token: record.token,
        offer: toOfferView(record.token, record.offer, categories),
        response: record.response,
        stage: record.stage,
        allocationAfter: record.S_B,
        tags: record.tags ?? [],
    }));
    return {
        id: snapshot.id,
        categories,
        algorithm: snapshot.algorithm,
        allocation: snapshot.S_B,
        agentAllocation: snapshot.S_A,
        humanTarget: snapshot.human_target,
        timeRemaining: snapshot.time_remaining,
        offer: snapshot.offer ? toOfferView(snapshot.offer.token, snapshot.offer.delta, categories) : null,
        offerExpiresIn: snapshot.offer ? snapshot.offer.expires_in : 0,
        history,
        terminal: snapshot.terminal,
        terminalReason: snapshot.terminal_reason ?? null,
        score: snapshot.score ? buildScoreView(snapshot.score) : null,
    };
}

export function buildScoreView(score: { raw: number, clamped: number }): ScoreView {
    return {
        raw: score.raw,
        clamped: score.clamped,
        percent: Math.round(score.clamped * 100),
    };
}

export function validTarget(values: number[], n: number): string | null {
    if (values.length !== n) {
        return `enter all ${n} target amounts`;
    }
    for (const v of values) {
        if (!Number.isFinite(v)) {
            return "targets must be numbers";
        }
        if (v < 0 || v > 100) {
            return "targets must lie between 0 and 100";
        }
    }
    return null;
}
