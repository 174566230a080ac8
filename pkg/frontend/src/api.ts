/** HTTP client for the annotation service (bearer-token auth). */

import {
  AnnotationApi,
  ApiError,
  ConversationPayload,
  Label,
  ListResponse,
  StatusResponse,
  SubmissionAck,
} from "./types.js";

export class HttpAnnotationApi implements AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init?.headers ?? {}),
      },
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  listConversations(): Promise<ListResponse> {
    return this.request<ListResponse>("/conversations");
  }

  getConversation(conversationId: string): Promise<ConversationPayload> {
    return this.request<ConversationPayload>(
      `/conversations/${encodeURIComponent(conversationId)}`,
    );
  }

  submitAnnotation(
    conversationId: string,
    turnIndex: number,
    labels: Label[],
  ): Promise<SubmissionAck> {
    return this.request<SubmissionAck>("/annotations", {
      method: "POST",
      body: JSON.stringify({
        conversation_id: conversationId,
        turn_index: turnIndex,
        labels,
      }),
    });
  }

  conversationStatus(conversationId: string): Promise<StatusResponse> {
    return this.request<StatusResponse>(
      `/conversations/${encodeURIComponent(conversationId)}/status`,
    );
  }

  audioUrl(conversationId: string, turnIndex: number): string {
    return `${this.baseUrl}/audio/${encodeURIComponent(conversationId)}/${turnIndex}`;
  }
}
