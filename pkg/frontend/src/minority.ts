/**
 * Minority game UI: two buttons dealt by the manager, a waiting indicator
 * while queued, and a result banner when the round resolves.
 *
 * The view-model helpers are pure so the round logic can be tested
 * without a DOM; `bootMinorityUi` wires them to the page.
 */

import { Client, WireMessage } from "./client.js";

export interface ChoicesView {
  values: [number, number];
  labels: [string, string];
}

export function formatAmount(value: number, currency?: string): string {
  return currency ? `${currency}${value}` : String(value);
}

/** Accepts dealt params as `[v1, v2]` or `{values: [v1, v2], currency}`. */
export function parseChoices(params: unknown): ChoicesView {
  let values: unknown;
  let currency: string | undefined;
  if (Array.isArray(params)) {
    values = params;
  } else if (params && typeof params === "object" && "values" in params) {
    values = (params as { values: unknown }).values;
    const sign = (params as { currency?: unknown }).currency;
    currency = typeof sign === "string" ? sign : undefined;
  }
  if (!Array.isArray(values) || values.length < 2) {
    throw new Error("mgChoices params must carry two amounts");
  }
  const pair: [number, number] = [Number(values[0]), Number(values[1])];
  return {
    values: pair,
    labels: [formatAmount(pair[0], currency), formatAmount(pair[1], currency)],
  };
}

export interface ResultView {
  kind: "winner" | "loser" | "nobody";
  headline: string;
  detail: string;
}

interface ResultParams {
  winner?: string | null;
  amount?: number;
  choices?: Record<string, number>;
  currency?: string;
}

export function resultView(params: unknown, myClientId: string | null): ResultView {
  const result = (params ?? {}) as ResultParams;
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
export function gameIdFromPath(pathname: string): string {
  const parts = pathname.split("/").filter((p) => p !== "");
  if (parts[0] !== "games" || !parts[1]) {
    throw new Error(`cannot find game id in path: ${pathname}`);
  }
  return parts[1];
}

export interface MinorityElements {
  status: HTMLElement;
  buttons: HTMLElement;
  banner: HTMLElement;
}

function elements(doc: Document): MinorityElements {
  const get = (id: string) => {
    const el = doc.getElementById(id);
    if (!el) {
      throw new Error(`missing #${id}`);
    }
    return el;
  };
  return { status: get("status"), buttons: get("buttons"), banner: get("banner") };
}

export function bootMinorityUi(doc: Document, client: Client, gameId: string): Client {
  const ui = elements(doc);
  let picked = false;

  const setStatus = (text: string) => {
    ui.status.textContent = text;
  };

  const play = (view: ChoicesView) => {
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

  const answer = (msg: WireMessage) => {
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
