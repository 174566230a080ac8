/** DOM wiring: conversation list with progress badges, ordered turn cards
 * with audio players and word chips, submit with inline error display. */

import { HttpAnnotationApi } from "./api.js";
import { ConversationSession, describeError } from "./session.js";
import { AnnotationApi } from "./types.js";

interface AppConfig {
  baseUrl: string;
  token: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class AnnotatorApp {
  private session: ConversationSession | null = null;

  constructor(
    private readonly api: AnnotationApi,
    private readonly root: HTMLElement,
  ) {}

  async showConversationList(): Promise<void> {
    this.session = null;
    this.root.replaceChildren();
    const listing = await this.api.listConversations();
    this.root.appendChild(el("h1", "title", `Conversations — ${listing.annotator_id}`));
    if (listing.hint) {
      this.root.appendChild(el("p", "hint", listing.hint));
      return;
    }
    if (listing.conversations.length === 0) {
      this.root.appendChild(el("p", "empty", "No conversations on the server yet."));
      return;
    }
    const list = el("ul", "conversation-list");
    for (const summary of listing.conversations) {
      const item = el("li", `conversation status-${summary.status.replace(" ", "-")}`);
      const button = el("button", "open", summary.conversation_id);
      button.addEventListener("click", () => {
        void this.openConversation(summary.conversation_id);
      });
      item.appendChild(button);
      item.appendChild(
        el("span", "badge", `${summary.annotated_turns}/${summary.turns} · ${summary.status}`),
      );
      list.appendChild(item);
    }
    this.root.appendChild(list);
  }

  async openConversation(conversationId: string): Promise<void> {
    this.session = await ConversationSession.open(this.api, conversationId);
    this.renderConversation();
  }

  private renderConversation(): void {
    const session = this.session;
    if (!session) return;
    this.root.replaceChildren();
    const back = el("button", "back", "← conversation list");
    back.addEventListener("click", () => void this.showConversationList());
    this.root.appendChild(back);
    this.root.appendChild(el("h1", "title", session.conversationId));

    for (const view of session.turnViews) {
      const locked = session.isLocked(view.turnIndex);
      const card = el(
        "section",
        `turn ${view.submitted ? "submitted" : locked ? "locked" : "active"}`,
      );
      const heading = el(
        "h2",
        "speaker",
        `Turn ${view.turnIndex} — ${view.speakerId}` +
          (view.historyHeard ? " ✓ heard" : ""),
      );
      card.appendChild(heading);

      const audio = el("audio");
      audio.controls = true;
      audio.src = this.api.audioUrl(session.conversationId, view.turnIndex);
      audio.addEventListener("ended", () => {
        session.markHistoryHeard(view.turnIndex);
        this.renderConversation();
      });
      card.appendChild(audio);

      const chips = el("div", "chips");
      view.words.forEach((word, wordIndex) => {
        const chip = el(
          "button",
          `chip ${view.labels[wordIndex] === "I" ? "emphasized" : ""}`,
          word,
        );
        chip.disabled = view.submitted;
        chip.addEventListener("click", () => {
          session.toggleWord(view.turnIndex, wordIndex);
          this.renderConversation();
        });
        chips.appendChild(chip);
      });
      card.appendChild(chips);

      if (!view.submitted && !locked) {
        const submit = el("button", "submit", "Submit turn");
        submit.addEventListener("click", () => {
          void session
            .submitTurn(view.turnIndex)
            .then(() => this.renderConversation())
            .catch((error: unknown) => {
              this.showError(describeError(error));
            });
        });
        card.appendChild(submit);
      }
      this.root.appendChild(card);
    }
    if (session.lastHint) this.showError(session.lastHint);
    if (session.isComplete()) {
      this.root.appendChild(el("p", "done", "Conversation fully annotated — thank you."));
    }
  }

  private showError(message: string): void {
    const existing = this.root.querySelector(".error");
    if (existing) existing.remove();
    this.root.appendChild(el("p", "error", message));
  }
}

export function startApp(config: AppConfig): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const api = new HttpAnnotationApi(config.baseUrl, config.token);
  const app = new AnnotatorApp(api, root);
  void app.showConversationList();
}
