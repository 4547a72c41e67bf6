// Offer presentation: the server speaks signed vectors (positive = the
// computer agent receives), people read two labeled "receives" columns.
// The mapping is lossless on integer offers.

export interface OfferView {
    token: number,
    agentReceives: Record<string, number>,
    youReceive: Record<string, number>,
}

export function toOfferView(token: number, delta: number[], categories: string[]): OfferView {
    const agentReceives: Record<string, number> = {};
    const youReceive: Record<string, number> = {};
    delta.forEach((value, i) => {
        const label = categories[i];
        if (value > 0) {
            agentReceives[label] = value;
        } else if (value < 0) {
            youReceive[label] = -value;
        }
    });
    return { token, agentReceives, youReceive };
}

export function toDelta(view: OfferView, categories: string[]): number[] {
    return categories.map((label) => {
        const gain = view.agentReceives[label] ?? 0;
        const loss = view.youReceive[label] ?? 0;
        return gain - loss;
    });
}

// Counteroffer form: what the human gives goes to the agent (positive),
// what the human asks to receive comes from the agent (negative).
export function buildCounterDelta(
    give: Record<string, number>,
    receive: Record<string, number>,
    categories: string[],
): number[] {
    return categories.map((label) => (give[label] ?? 0) - (receive[label] ?? 0));
}

export function describeOffer(view: OfferView): string {
    const side = (entries: Record<string, number>) => {
        const parts = Object.entries(entries).map(([label, amount]) => `${amount} ${label}`);
        return parts.length ? parts.join(", ") : "nothing";
    };
    return `Agent receives: ${side(view.agentReceives)} / You receive: ${side(view.youReceive)}`;
}
