/** Client-side state machine for annotating one conversation.
 *
 * Mirrors the server's ordering rule: a turn is editable only when every
 * prior turn has been submitted, so out-of-order submission is impossible
 * from the UI. Word chips are the single source of truth for the
 * submission payload.
 */

import {
  AnnotationApi,
  ApiError,
  ConversationPayload,
  Label,
} from "./types.js";

export interface TurnView {
  turnIndex: number;
  speakerId: string;
  text: string;
  words: string[];
  labels: Label[];
  submitted: boolean;
  historyHeard: boolean;
  audioUrl: string;
}

export class OrderingLockError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "OrderingLockError";
  }
}

export class ConversationSession {
  readonly conversationId: string;
  private turns: TurnView[] = [];
  /** Hint shown after a rejected interaction (toggle on a locked turn). */
  lastHint: string | null = null;

  constructor(
    private readonly api: AnnotationApi,
    conversation: ConversationPayload,
    alreadyAnnotatedTurns = 0,
  ) {
    this.conversationId = conversation.conversation_id;
    this.turns = conversation.turns.map((turn) => ({
      turnIndex: turn.turn_index,
      speakerId: turn.speaker_id,
      text: turn.text,
      words: [...turn.words],
      labels: turn.words.map(() => "O" as Label),
      submitted: turn.turn_index <= alreadyAnnotatedTurns,
      historyHeard: false,
      audioUrl: turn.audio_url,
    }));
  }

  static async open(
    api: AnnotationApi,
    conversationId: string,
  ): Promise<ConversationSession> {
    const [listing, conversation] = await Promise.all([
      api.listConversations(),
      api.getConversation(conversationId),
    ]);
    const summary = listing.conversations.find(
      (c) => c.conversation_id === conversationId,
    );
    return new ConversationSession(
      api,
      conversation,
      summary?.annotated_turns ?? 0,
    );
  }

  get turnViews(): readonly TurnView[] {
    return this.turns;
  }

  turn(turnIndex: number): TurnView {
    const view = this.turns[turnIndex - 1];
    if (!view) {
      throw new RangeError(`no turn ${turnIndex} in ${this.conversationId}`);
    }
    return view;
  }

  /** First turn not yet submitted; turns beyond it are locked. */
  frontier(): number {
    for (const view of this.turns) {
      if (!view.submitted) return view.turnIndex;
    }
    return this.turns.length + 1;
  }

  isLocked(turnIndex: number): boolean {
    return turnIndex !== this.frontier();
  }

  isComplete(): boolean {
    return this.frontier() > this.turns.length;
  }

  toggleWord(turnIndex: number, wordIndex: number): TurnView {
    const view = this.turn(turnIndex);
    if (this.isLocked(turnIndex)) {
      this.lastHint = view.submitted
        ? `turn ${turnIndex} is already submitted and immutable`
        : `annotate earlier turns first (next is turn ${this.frontier()})`;
      return view;
    }
    if (wordIndex < 0 || wordIndex >= view.words.length) {
      throw new RangeError(`no word ${wordIndex} in turn ${turnIndex}`);
    }
    view.labels[wordIndex] = view.labels[wordIndex] === "I" ? "O" : "I";
    this.lastHint = null;
    return view;
  }

  /** The exact submission payload: the current chip states. */
  payload(turnIndex: number): Label[] {
    return [...this.turn(turnIndex).labels];
  }

  markHistoryHeard(turnIndex: number): void {
    this.turn(turnIndex).historyHeard = true;
  }

  /** All prior turns listened to (encouraged, not enforced). */
  historyHeardThrough(turnIndex: number): boolean {
    return this.turns
      .filter((t) => t.turnIndex < turnIndex)
      .every((t) => t.historyHeard);
  }

  /**
   * Submit the turn's chip states. Client-side ordering is enforced before
   * any network call; on server rejection or network failure the chip
   * states are untouched so the submission can be retried.
   */
  async submitTurn(turnIndex: number): Promise<void> {
    const view = this.turn(turnIndex);
    if (view.submitted) {
      throw new OrderingLockError(`turn ${turnIndex} is already submitted`);
    }
    if (this.isLocked(turnIndex)) {
      throw new OrderingLockError(
        `cannot submit turn ${turnIndex} before turn ${this.frontier()}`,
      );
    }
    const ack = await this.api.submitAnnotation(
      this.conversationId,
      turnIndex,
      this.payload(turnIndex),
    );
    if (ack.status === "accepted" || ack.status === "duplicate") {
      view.submitted = true;
    }
  }
}

export function describeError(error: unknown): string {
  if (error instanceof OrderingLockError) return error.message;
  if (error instanceof ApiError) return `server rejected: ${error.message}`;
  if (error instanceof Error) return `network failure: ${error.message}; retry to resubmit`;
  return String(error);
}
