/** Payload shapes of the annotation service HTTP API. */

export type Label = "I" | "O";

export interface ConversationSummary {
  conversation_id: string;
  turns: number;
  annotated_turns: number;
  status: "not started" | "in-progress" | "complete";
}

export interface ListResponse {
  annotator_id: string;
  conversations: ConversationSummary[];
  hint?: string;
}

export interface TurnPayload {
  turn_index: number;
  speaker_id: string;
  text: string;
  words: string[];
  audio_url: string;
}

export interface ConversationPayload {
  conversation_id: string;
  turns: TurnPayload[];
}

export interface SubmissionAck {
  status: "accepted" | "duplicate";
  turn_index: number;
}

export interface StatusTurn {
  turn_index: number;
  annotator_count: number;
  intensity?: number[];
}

export interface StatusResponse {
  conversation_id: string;
  quorum: number;
  turns: StatusTurn[];
}

/** Client interface to the service; the UI never talks HTTP directly. */
export interface AnnotationApi {
  listConversations(): Promise<ListResponse>;
  getConversation(conversationId: string): Promise<ConversationPayload>;
  submitAnnotation(
    conversationId: string,
    turnIndex: number,
    labels: Label[],
  ): Promise<SubmissionAck>;
  conversationStatus(conversationId: string): Promise<StatusResponse>;
  audioUrl(conversationId: string, turnIndex: number): string;
}

/** Server rejected the request (4xx); carries the HTTP status. */
export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}
