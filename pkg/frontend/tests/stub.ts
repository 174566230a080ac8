/** In-memory stub of the annotation service with the same contract as the
 * HTTP API: strict per-annotator ordering, idempotent duplicates, immutable
 * raw annotations, aggregation at quorum. Supports fault injection for
 * retry tests. */

import {
  AnnotationApi,
  ApiError,
  ConversationPayload,
  Label,
  ListResponse,
  StatusResponse,
  SubmissionAck,
} from "../src/types.js";

export interface StubConversation {
  conversationId: string;
  turns: { speakerId: string; words: string[] }[];
}

interface LogRecord {
  conversationId: string;
  turnIndex: number;
  annotatorId: string;
  labels: Label[];
}

export class StubAnnotationApi implements AnnotationApi {
  readonly log: LogRecord[] = [];
  failNextSubmit: Error | null = null;

  constructor(
    private readonly conversations: StubConversation[],
    private readonly annotatorId = "tester",
    private readonly quorum = 1,
  ) {}

  private find(conversationId: string): StubConversation {
    const conv = this.conversations.find((c) => c.conversationId === conversationId);
    if (!conv) throw new ApiError(`no conversation ${conversationId}`, 404);
    return conv;
  }

  private annotated(conversationId: string): Map<number, Label[]> {
    const done = new Map<number, Label[]>();
    for (const rec of this.log) {
      if (rec.conversationId === conversationId && rec.annotatorId === this.annotatorId) {
        done.set(rec.turnIndex, rec.labels);
      }
    }
    return done;
  }

  private frontier(conversationId: string): number {
    const done = this.annotated(conversationId);
    let next = 1;
    while (done.has(next)) next += 1;
    return next;
  }

  async listConversations(): Promise<ListResponse> {
    return {
      annotator_id: this.annotatorId,
      conversations: this.conversations.map((conv) => {
        const annotated = this.frontier(conv.conversationId) - 1;
        const status =
          annotated === 0
            ? ("not started" as const)
            : annotated >= conv.turns.length
              ? ("complete" as const)
              : ("in-progress" as const);
        return {
          conversation_id: conv.conversationId,
          turns: conv.turns.length,
          annotated_turns: annotated,
          status,
        };
      }),
    };
  }

  async getConversation(conversationId: string): Promise<ConversationPayload> {
    const conv = this.find(conversationId);
    return {
      conversation_id: conv.conversationId,
      turns: conv.turns.map((turn, i) => ({
        turn_index: i + 1,
        speaker_id: turn.speakerId,
        text: turn.words.join(" "),
        words: [...turn.words],
        audio_url: `/audio/${conv.conversationId}/${i + 1}`,
      })),
    };
  }

  async submitAnnotation(
    conversationId: string,
    turnIndex: number,
    labels: Label[],
  ): Promise<SubmissionAck> {
    if (this.failNextSubmit) {
      const failure = this.failNextSubmit;
      this.failNextSubmit = null;
      throw failure;
    }
    const conv = this.find(conversationId);
    if (turnIndex < 1 || turnIndex > conv.turns.length) {
      throw new ApiError(`turn ${turnIndex} out of range`, 422);
    }
    if (labels.length !== conv.turns[turnIndex - 1].words.length) {
      throw new ApiError("label count does not match word count", 422);
    }
    const done = this.annotated(conversationId);
    const existing = done.get(turnIndex);
    if (existing) {
      if (existing.join("") === labels.join("")) {
        return { status: "duplicate", turn_index: turnIndex };
      }
      throw new ApiError("turn already annotated; raw annotations are immutable", 409);
    }
    const expected = this.frontier(conversationId);
    if (turnIndex !== expected) {
      throw new ApiError(`turns must be annotated in order: next is ${expected}`, 409);
    }
    this.log.push({
      conversationId,
      turnIndex,
      annotatorId: this.annotatorId,
      labels: [...labels],
    });
    return { status: "accepted", turn_index: turnIndex };
  }

  async conversationStatus(conversationId: string): Promise<StatusResponse> {
    const conv = this.find(conversationId);
    const turns = conv.turns.map((turn, i) => {
      const records = this.log.filter(
        (rec) => rec.conversationId === conversationId && rec.turnIndex === i + 1,
      );
      const entry: StatusResponse["turns"][number] = {
        turn_index: i + 1,
        annotator_count: records.length,
      };
      if (records.length >= this.quorum) {
        entry.intensity = turn.words.map(
          (_, w) =>
            records.filter((rec) => rec.labels[w] === "I").length / records.length,
        );
      }
      return entry;
    });
    return { conversation_id: conversationId, quorum: this.quorum, turns };
  }

  audioUrl(conversationId: string, turnIndex: number): string {
    return `stub://audio/${conversationId}/${turnIndex}`;
  }
}
