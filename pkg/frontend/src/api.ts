// Thin fetch client for the session service. All state lives server-side;
// every mutation flows through a tokened respond call.

export interface OfferPayload {
    token: number,
    delta: number[],
    expires_in: number,
}

export interface HistoryRecord {
    token: number,
    offer: number[],
    response: string,
    stage: string,
    S_B: number[],
    tags: string[],
}

export interface SessionSnapshot {
    id: string,
    categories: string[],
    algorithm: string,
    agent_target: number[],
    human_target: number[],
    S_A: number[],
    S_B: number[],
    history: HistoryRecord[],
    terminal: boolean,
    terminal_reason?: string,
    created: string,
    now: string,
    time_remaining: number,
    offer?: OfferPayload,
    score?: { raw: number, clamped: number },
}

export interface CreateSessionRequest {
    human_target: number[],
    agent_target?: number[],
    algorithm?: string,
    seed?: number,
    time_limit?: number,
    per_offer_timeout?: number,
}

export class SessionApi {
    baseUrl: string;

    constructor(baseUrl: string) {
        this.baseUrl = baseUrl.endsWith("/") ? baseUrl.slice(0, -1) : baseUrl;
    }

    private async request(method: string, path: string, body?: unknown): Promise<any> {
        const res = await fetch(`${this.baseUrl}${path}`, {
            method,
            headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
            body: body !== undefined ? JSON.stringify(body) : undefined,
        });
        if (!res.ok) {
            const detail = await res.text();
            throw new Error(`${method} ${path} failed (${res.status}): ${detail}`);
        }
        return res.json();
    }

    createSession(req: CreateSessionRequest): Promise<SessionSnapshot> {
        return this.request("POST", "/sessions", req);
    }

    getSession(id: string): Promise<SessionSnapshot> {
        return this.request("GET", `/sessions/${id}`);
    }

    respond(id: string, token: number, action: "accept" | "reject" | "counter", counter?: number[]): Promise<SessionSnapshot> {
        return this.request("POST", `/sessions/${id}/respond`, { token, action, counter });
    }

    endSession(id: string): Promise<SessionSnapshot> {
        return this.request("POST", `/sessions/${id}/end`);
    }

    async transcript(id: string): Promise<string> {
        const res = await fetch(`${this.baseUrl}/sessions/${id}/transcript`);
        if (!res.ok) {
            throw new Error(`transcript fetch failed (${res.status})`);
        }
        return res.text();
    }
}
