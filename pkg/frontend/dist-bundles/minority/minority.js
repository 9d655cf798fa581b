/**
 * Minority game UI: two buttons dealt by the manager, a waiting indicator
 * while queued, and a result banner when the round resolves.
 *
 * The view-model helpers are pure so the round logic can be tested
 * without a DOM; `bootMinorityUi` wires them to the page.
 */
export function formatAmount(value, currency) {
    return currency ? `${currency}${value}` : String(value);
}
/** Accepts dealt params as `[v1, v2]` or `{values: [v1, v2], currency}`. */
export function parseChoices(params) {
    let values;
    let currency;
    if (Array.isArray(params)) {
        values = params;
    }
    else if (params && typeof params === "object" && "values" in params) {
        values = params.values;
        const sign = params.currency;
        currency = typeof sign === "string" ? sign : undefined;
    }
    if (!Array.isArray(values) || values.length < 2) {
        throw new Error("mgChoices params must carry two amounts");
    }
    const pair = [Number(values[0]), Number(values[1])];
    return {
        values: pair,
        labels: [formatAmount(pair[0], currency), formatAmount(pair[1], currency)],
    };
}
export function resultView(params, myClientId) {
    const result = (params ?? {});
    const currency = typeof result.currency === "string" ? result.currency : undefined;
    if (!result.winner) {
        return {
            kind: "nobody",
            headline: "Nobody wins",
            detail: "Everyone picked the same amount, so nothing happens.",
        };
    }
    const amount = formatAmount(result.amount ?? 0, currency);
    if (result.winner === myClientId) {
        return {
            kind: "winner",
            headline: `You win ${amount}!`,
            detail: "You were the only one to pick that amount.",
        };
    }
    return {
        kind: "loser",
        headline: "You lose",
        detail: `Another player was alone on ${amount} and takes it.`,
    };
}
/** The platform serves game bundles at /games/{gameId}/... */
export function gameIdFromPath(pathname) {
    const parts = pathname.split("/").filter((p) => p !== "");
    if (parts[0] !== "games" || !parts[1]) {
        throw new Error(`cannot find game id in path: ${pathname}`);
    }
    return parts[1];
}
function elements(doc) {
    const get = (id) => {
        const el = doc.getElementById(id);
        if (!el) {
            throw new Error(`missing #${id}`);
        }
        return el;
    };
    return { status: get("status"), buttons: get("buttons"), banner: get("banner") };
}
export function bootMinorityUi(doc, client, gameId) {
    const ui = elements(doc);
    let picked = false;
    const setStatus = (text) => {
        ui.status.textContent = text;
    };
    const play = (view) => {
        ui.buttons.innerHTML = "";
        picked = false;
        view.values.forEach((value, i) => {
            const button = doc.createElement("button");
            button.textContent = view.labels[i];
            button.className = "choice";
            button.addEventListener("click", () => {
                if (picked) {
                    return; // one choice per round
                }
                picked = true;
                setStatus("Waiting for the other players...");
                void client.send("manager", "mgUChoice", value);
            });
            ui.buttons.appendChild(button);
        });
        setStatus("Pick one amount. You win it if you are alone on it.");
    };
    const answer = (msg) => {
        const view = resultView(msg.params, client.clientId);
        ui.banner.textContent = `${view.headline} ${view.detail}`;
        ui.banner.className = `banner ${view.kind}`;
        ui.buttons.innerHTML = "";
        setStatus("Round over.");
    };
    client.receive("manager", (msg) => {
        switch (msg.topic) {
            case "mgChoices":
                play(parseChoices(msg.params));
                break;
            case "mgResult":
                answer(msg);
                break;
            default:
                break;
        }
    });
    client.receive("system", (msg) => {
        switch (msg.topic) {
            case "queued":
                setStatus("Waiting for other players to join...");
                break;
            case "instance":
                setStatus("Match found, loading...");
                break;
            case "drop":
                setStatus("A player left; the round was cancelled.");
                ui.banner.textContent = "Match aborted: a player disconnected.";
                ui.banner.className = "banner nobody";
                break;
            case "error":
                setStatus(`Something went wrong: ${JSON.stringify(msg.params)}`);
                break;
            case "over":
                break;
            default:
                break;
        }
    });
    setStatus("Connecting...");
    void client
        .open(gameId)
        .then(() => client.join())
        .catch((err) => setStatus(`Cannot join: ${String(err)}`));
    return client;
}
