/**
 * Catalog shell: the landing page listing playable games plus a per-game
 * description page with a Play link into the hosted game UI.
 *
 * Rendering helpers are pure (HTML strings from catalog data) so they can
 * be tested headlessly; boot functions attach them to a document.
 */
export function escapeHtml(text) {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}
export function renderCatalog(games) {
    if (games.length === 0) {
        return '<p class="empty">No games are published yet.</p>';
    }
    const cards = games.map((game) => {
        const badge = game.playable
            ? '<span class="badge open">open</span>'
            : '<span class="badge locked">restricted</span>';
        return [
            '<li class="game-card">',
            `<a href="/shell/game.html?game=${encodeURIComponent(game.gameId)}">`,
            `<h2>${escapeHtml(game.name)} ${badge}</h2>`,
            `<p>${escapeHtml(game.description)}</p>`,
            `<p class="players">${game.requiredPlayers} player${game.requiredPlayers === 1 ? "" : "s"}</p>`,
            "</a></li>",
        ].join("");
    });
    return `<ul class="catalog">${cards.join("")}</ul>`;
}
export function renderGamePage(game) {
    const play = game.playable
        ? `<a class="play" href="${escapeHtml(game.entryUrl)}">Play now</a>`
        : '<p class="locked">This game is restricted; sign-in or profile requirements apply.</p>';
    return [
        `<h1>${escapeHtml(game.name)}</h1>`,
        `<p class="description">${escapeHtml(game.description)}</p>`,
        `<p class="players">Players per match: ${game.requiredPlayers}</p>`,
        play,
    ].join("\n");
}
async function fetchCatalog(baseUrl = "") {
    const response = await fetch(`${baseUrl}/api/catalog`);
    if (!response.ok) {
        throw new Error(`catalog fetch failed: ${response.status}`);
    }
    const payload = (await response.json());
    return payload.games;
}
export async function bootCatalog(doc) {
    const mount = doc.getElementById("catalog");
    if (!mount) {
        throw new Error("missing #catalog");
    }
    try {
        mount.innerHTML = renderCatalog(await fetchCatalog());
    }
    catch (err) {
        mount.innerHTML = `<p class="empty">Catalog unavailable: ${escapeHtml(String(err))}</p>`;
    }
}
export async function bootGamePage(doc, search) {
    const mount = doc.getElementById("game");
    if (!mount) {
        throw new Error("missing #game");
    }
    const gameId = new URLSearchParams(search).get("game");
    if (!gameId) {
        mount.innerHTML = '<p class="empty">No game selected.</p>';
        return;
    }
    try {
        const games = await fetchCatalog();
        const game = games.find((g) => g.gameId === gameId);
        mount.innerHTML = game
            ? renderGamePage(game)
            : '<p class="empty">This game is not in the catalog.</p>';
    }
    catch (err) {
        mount.innerHTML = `<p class="empty">Unavailable: ${escapeHtml(String(err))}</p>`;
    }
}
