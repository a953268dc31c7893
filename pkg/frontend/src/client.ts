/**
 * HTTP client for the node's local API bridge: every endpoint is one POST
 * of a line document to /api/<endpoint>, answered with a line document or
 * a single ERROR|<code>|<detail> line.
 */

import { buildDoc, docRows, firstRow } from "./doc.js";

export class ApiError extends Error {
  constructor(
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export interface ProfileRow {
  id: string;
  name: string;
  fieldCount: number;
}

export interface ContactRow {
  entryId: string;
  sourceCode: string;
  receivedAtMs: number;
  transport: string;
  classification: string;
  profileName: string;
}

export interface ApprovalRow {
  requestId: string;
  requesterCode: string;
  arrivedAtMs: number;
  suggestedProfileId: string;
}

export interface RoomStatus {
  roomId: string;
  members: number;
  nextSeq: number;
  open: boolean;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class NodeApiClient {
  private fetchFn: FetchLike;

  constructor(
    private baseUrl: string,
    private token: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async call(endpoint: string, lines: string[] = []): Promise<string> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}/api/${endpoint}`, {
        method: "POST",
        headers: { "Content-Type": "text/plain; charset=utf-8" },
        body: buildDoc(this.token, lines),
      });
    } catch (err) {
      throw new ApiError("Transport", String(err));
    }
    const text = await res.text();
    if (!res.ok) {
      const parts = text.trim().split("|");
      if (parts[0] === "ERROR" && parts.length >= 3) {
        throw new ApiError(parts[1], parts.slice(2).join("|"));
      }
      throw new ApiError("Transport", `HTTP ${res.status}`);
    }
    return text;
  }

  async profileList(): Promise<ProfileRow[]> {
    const doc = await this.call("profile_list");
    return docRows(doc).map((row) => ({
      id: row[1],
      name: row[2],
      fieldCount: Number(row[3]),
    }));
  }

  async profileCreate(name: string, fields: { kind: string; value: string }[]): Promise<string> {
    const lines = [`NAME|${name}`, ...fields.map((f) => `F|${f.kind}|${f.value}`)];
    return firstRow(await this.call("profile_create", lines))[1];
  }

  async profileShow(ref: string): Promise<string> {
    return this.call("profile_show", [`REF|${ref}`]);
  }

  async profileDelete(id: string): Promise<void> {
    await this.call("profile_delete", [`ID|${id}`]);
  }

  async codeStatus(): Promise<{ code: string; status: string }> {
    const row = firstRow(await this.call("code_status"));
    return { code: row[1], status: row[2] };
  }

  async codeRegister(code: string, phone: string): Promise<string> {
    const row = firstRow(await this.call("code_register", [`CODE|${code}`, `PHONE|${phone}`]));
    return row[1]; // challenge id
  }

  async codeVerify(otp: string): Promise<string> {
    return firstRow(await this.call("code_verify", [`OTP|${otp}`]))[1];
  }

  async exchange(code: string): Promise<{ entryId: string; sourceCode: string }> {
    const row = firstRow(await this.call("exchange", [`CODE|${code}`]));
    return { entryId: row[1], sourceCode: row[2] };
  }

  async contactList(): Promise<ContactRow[]> {
    return this.parseContacts(await this.call("contact_list"));
  }

  async contactSearch(filter: { text?: string; classification?: string }): Promise<ContactRow[]> {
    const lines: string[] = [];
    if (filter.text) lines.push(`TEXT|${filter.text}`);
    if (filter.classification) lines.push(`CLASS|${filter.classification}`);
    return this.parseContacts(await this.call("contact_search", lines));
  }

  private parseContacts(doc: string): ContactRow[] {
    return docRows(doc).map((row) => ({
      entryId: row[1],
      sourceCode: row[2],
      receivedAtMs: Number(row[3]),
      transport: row[4],
      classification: row[5],
      profileName: row[6],
    }));
  }

  async contactClassify(entryId: string, label: string): Promise<void> {
    await this.call("contact_classify", [`ENTRY|${entryId}`, `CLASS|${label}`]);
  }

  async exportVcard(entryId: string): Promise<string> {
    return this.call("export_vcard", [`ENTRY|${entryId}`]);
  }

  async approvalList(): Promise<ApprovalRow[]> {
    const doc = await this.call("approval_list");
    return docRows(doc).map((row) => ({
      requestId: row[1],
      requesterCode: row[2],
      arrivedAtMs: Number(row[3]),
      suggestedProfileId: row[4],
    }));
  }

  async approvalResolve(requestId: string, action: "approve" | "refuse", profileId?: string): Promise<void> {
    const lines = [`REQUEST|${requestId}`, `ACTION|${action}`];
    if (profileId) lines.push(`PROFILE|${profileId}`);
    await this.call("approval_resolve", lines);
  }

  async roomHost(): Promise<{ roomId: string; hostEndpoint: string }> {
    const row = firstRow(await this.call("room_host"));
    return { roomId: row[1], hostEndpoint: row[2] };
  }

  async roomStatus(roomId: string): Promise<RoomStatus> {
    const row = firstRow(await this.call("room_status", [`ROOM|${roomId}`]));
    return { roomId: row[1], members: Number(row[2]), nextSeq: Number(row[3]), open: row[4] === "open" };
  }

  async roomJoin(roomId: string, hostEndpoint: string): Promise<string> {
    const row = firstRow(await this.call("room_join", [`ROOM|${roomId}`, `HOST|${hostEndpoint}`]));
    return row[2]; // host code
  }

  async roomCast(roomId: string, profileRef: string): Promise<{ seq: number; delivered: number; total: number }> {
    const row = firstRow(await this.call("room_cast", [`ROOM|${roomId}`, `PROFILE|${profileRef}`]));
    return { seq: Number(row[2]), delivered: Number(row[3]), total: Number(row[4]) };
  }
}
