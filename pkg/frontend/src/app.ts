/**
 * The exchange surface: six screens over the node's local API.
 *
 * Every piece of displayed state comes from an API reply; the only logic
 * that lives here is input validation and rendering, so reloading the page
 * (or remounting the app) reproduces the same state from the node. Pending
 * approvals, registration status and hosted-room membership refresh on a
 * one second poll.
 */

import { ApiError, NodeApiClient, type ContactRow } from "./client.js";
import { codeError, phoneError } from "./validation.js";

export interface AppOptions {
  baseUrl: string;
  token: string;
  pollMs?: number;
  fetchFn?: typeof fetch;
}

type Attrs = Record<string, string | boolean | ((ev: Event) => void)>;

function el(tag: string, attrs: Attrs = {}, children: (Node | string)[] = []): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) node.setAttribute(key, "");
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

const SCREENS = [
  ["mycode", "My code"],
  ["profiles", "Profiles"],
  ["exchange", "Exchange"],
  ["approvals", "Approvals"],
  ["room", "Room"],
  ["contacts", "Contacts"],
] as const;

type ScreenId = (typeof SCREENS)[number][0];

export class App {
  readonly client: NodeApiClient;
  private root: HTMLElement;
  private pollMs: number;
  private timer: ReturnType<typeof setInterval> | null = null;
  private active: ScreenId = "mycode";
  private bodies = new Map<ScreenId, HTMLElement>();
  private hostedRoom: { roomId: string; hostEndpoint: string } | null = null;

  constructor(root: HTMLElement, options: AppOptions) {
    this.root = root;
    this.pollMs = options.pollMs ?? 1000;
    this.client = new NodeApiClient(options.baseUrl, options.token, options.fetchFn);
    this.renderShell();
    this.show("mycode");
    this.timer = setInterval(() => void this.poll(), this.pollMs);
    void this.poll();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private q<T extends HTMLElement>(testId: string): T {
    const node = this.root.querySelector(`[data-testid="${testId}"]`);
    if (!node) throw new Error(`missing element ${testId}`);
    return node as T;
  }

  private renderShell(): void {
    const nav = el("nav", {});
    for (const [id, label] of SCREENS) {
      nav.append(
        el(
          "button",
          { "data-testid": `tab-${id}`, onclick: () => this.show(id) },
          [label],
        ),
      );
    }
    this.root.append(nav);
    for (const [id] of SCREENS) {
      const body = el("section", { "data-testid": `screen-${id}`, hidden: true });
      this.bodies.set(id, body);
      this.root.append(body);
    }
    this.buildMyCode();
    this.buildProfiles();
    this.buildExchange();
    this.buildApprovals();
    this.buildRoom();
    this.buildContacts();
  }

  show(id: ScreenId): void {
    this.active = id;
    for (const [screen, body] of this.bodies) {
      if (screen === id) body.removeAttribute("hidden");
      else body.setAttribute("hidden", "");
    }
    if (id === "profiles") void this.refreshProfiles();
    if (id === "contacts") void this.refreshContacts();
    if (id === "approvals") void this.refreshApprovals();
    if (id === "mycode") void this.refreshCodeStatus();
  }

  private async poll(): Promise<void> {
    try {
      await this.refreshApprovals();
      if (this.hostedRoom) await this.refreshRoomStatus();
      if (this.active === "mycode") await this.refreshCodeStatus();
    } catch {
      // A missed poll is retried on the next tick.
    }
  }

  // -- My code -------------------------------------------------------------

  private buildMyCode(): void {
    const body = this.bodies.get("mycode")!;
    body.append(
      el("h2", {}, ["My code"]),
      el("p", { "data-testid": "code-status" }, ["…"]),
      el("div", {}, [
        el("input", { "data-testid": "register-code", placeholder: "code (2-6 chars)" }),
        el("input", { "data-testid": "register-phone", placeholder: "+15550001111" }),
        el("button", { "data-testid": "register-submit", onclick: () => void this.register() }, [
          "Register",
        ]),
      ]),
      el("div", {}, [
        el("input", { "data-testid": "register-otp", placeholder: "OTP from SMS" }),
        el("button", { "data-testid": "register-verify", onclick: () => void this.verify() }, [
          "Verify",
        ]),
      ]),
      el("p", { "data-testid": "register-note" }, []),
    );
  }

  private async refreshCodeStatus(): Promise<void> {
    const status = await this.client.codeStatus();
    const label = status.code ? `${status.code} (${status.status})` : `none (${status.status})`;
    this.q("code-status").textContent = label;
  }

  private async register(): Promise<void> {
    const code = this.q<HTMLInputElement>("register-code").value;
    const phone = this.q<HTMLInputElement>("register-phone").value;
    const note = this.q("register-note");
    const problem = codeError(code) ?? phoneError(phone);
    if (problem) {
      note.textContent = problem;
      return;
    }
    try {
      await this.client.codeRegister(code, phone);
      note.textContent = "Challenge sent: enter the OTP that arrived by SMS.";
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  private async verify(): Promise<void> {
    const note = this.q("register-note");
    try {
      const code = await this.client.codeVerify(this.q<HTMLInputElement>("register-otp").value);
      note.textContent = `Code ${code} is active.`;
      await this.refreshCodeStatus();
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  // -- Profiles ------------------------------------------------------------

  private buildProfiles(): void {
    const body = this.bodies.get("profiles")!;
    body.append(
      el("h2", {}, ["Profiles"]),
      el("ul", { "data-testid": "profile-list" }),
      el("div", {}, [
        el("input", { "data-testid": "profile-name", placeholder: "profile name" }),
        el("textarea", {
          "data-testid": "profile-fields",
          placeholder: "one field per line: KIND=value",
        }),
        el(
          "button",
          { "data-testid": "profile-create", onclick: () => void this.createProfile() },
          ["Create"],
        ),
      ]),
      el("p", { "data-testid": "profile-note" }, []),
    );
  }

  private async refreshProfiles(): Promise<void> {
    const profiles = await this.client.profileList();
    const list = this.q("profile-list");
    list.replaceChildren(
      ...profiles.map((p) =>
        el("li", {}, [
          `${p.name} (${p.fieldCount} fields) `,
          el(
            "button",
            {
              onclick: () =>
                void this.client.profileDelete(p.id).then(() => this.refreshProfiles()),
            },
            ["delete"],
          ),
        ]),
      ),
    );
  }

  private async createProfile(): Promise<void> {
    const note = this.q("profile-note");
    const name = this.q<HTMLInputElement>("profile-name").value;
    const fieldText = this.q<HTMLTextAreaElement>("profile-fields").value;
    const fields = fieldText
      .split("\n")
      .map((line) => line.trim())
      .filter((line) => line.length > 0)
      .map((line) => {
        const eq = line.indexOf("=");
        if (eq <= 0) throw new ApiError("Validation", `fields are KIND=value, got ${line}`);
        return { kind: line.slice(0, eq), value: line.slice(eq + 1) };
      });
    try {
      await this.client.profileCreate(name, fields);
      note.textContent = `Created ${name}.`;
      await this.refreshProfiles();
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  // -- Exchange ------------------------------------------------------------

  private buildExchange(): void {
    const body = this.bodies.get("exchange")!;
    const input = el("input", {
      "data-testid": "code-input",
      placeholder: "peer code, e.g. Wa10",
      oninput: () => this.validateExchangeInput(),
    });
    body.append(
      el("h2", {}, ["Exchange"]),
      el("div", {}, [
        input,
        el(
          "button",
          {
            "data-testid": "exchange-confirm",
            disabled: true,
            onclick: () => void this.runExchange(),
          },
          ["Ask for their card"],
        ),
      ]),
      el("p", { "data-testid": "code-error" }, []),
      el("div", { "data-testid": "exchange-result" }, []),
    );
  }

  private validateExchangeInput(): void {
    const value = this.q<HTMLInputElement>("code-input").value;
    const problem = value ? codeError(value) : "";
    this.q("code-error").textContent = problem ?? "";
    const confirm = this.q<HTMLButtonElement>("exchange-confirm");
    confirm.disabled = !value || problem !== null;
  }

  private async runExchange(): Promise<void> {
    const code = this.q<HTMLInputElement>("code-input").value;
    const result = this.q("exchange-result");
    result.replaceChildren(el("p", {}, ["Asking…"]));
    try {
      const saved = await this.client.exchange(code);
      const classify = el("input", {
        "data-testid": "classify-input",
        placeholder: "classification, e.g. conference",
      });
      const note = el("p", { "data-testid": "classify-note" }, []);
      result.replaceChildren(
        el("p", { "data-testid": "card-source" }, [`Got the card from ${saved.sourceCode}.`]),
        el("p", { "data-testid": "card-entry" }, [`Saved as entry ${saved.entryId}.`]),
        el("div", {}, [
          classify,
          el(
            "button",
            {
              "data-testid": "classify-save",
              onclick: () =>
                void this.client
                  .contactClassify(saved.entryId, (classify as HTMLInputElement).value)
                  .then(() => {
                    note.textContent = "Saved & classified.";
                  })
                  .catch((err) => {
                    note.textContent = describe(err);
                  }),
            },
            ["Save & classify"],
          ),
        ]),
        note,
      );
    } catch (err) {
      result.replaceChildren(
        el("p", { "data-testid": "exchange-error" }, [describe(err)]),
        el(
          "button",
          { "data-testid": "exchange-retry", onclick: () => void this.runExchange() },
          ["Retry"],
        ),
      );
    }
  }

  // -- Approvals -----------------------------------------------------------

  private buildApprovals(): void {
    const body = this.bodies.get("approvals")!;
    body.append(
      el("h2", {}, ["Pending approvals"]),
      el("ul", { "data-testid": "approval-list" }),
    );
  }

  private async refreshApprovals(): Promise<void> {
    const approvals = await this.client.approvalList();
    const list = this.q("approval-list");
    list.replaceChildren(
      ...approvals.map((a) =>
        el("li", { "data-testid": `pending-${a.requestId}` }, [
          `${a.requesterCode || "unknown requester"} asks for your card `,
          el(
            "button",
            {
              onclick: () =>
                void this.client
                  .approvalResolve(a.requestId, "approve", a.suggestedProfileId || undefined)
                  .then(() => this.refreshApprovals()),
            },
            ["approve"],
          ),
          el(
            "button",
            {
              onclick: () =>
                void this.client
                  .approvalResolve(a.requestId, "refuse")
                  .then(() => this.refreshApprovals()),
            },
            ["refuse"],
          ),
        ]),
      ),
    );
  }

  // -- Room ----------------------------------------------------------------

  private buildRoom(): void {
    const body = this.bodies.get("room")!;
    body.append(
      el("h2", {}, ["Room broadcast"]),
      el("button", { "data-testid": "room-host", onclick: () => void this.hostRoom() }, [
        "Host a room",
      ]),
      el("p", { "data-testid": "room-info" }, []),
      el("p", { "data-testid": "room-members" }, []),
      el("div", {}, [
        el("input", { "data-testid": "cast-profile", placeholder: "profile name to broadcast" }),
        el("button", { "data-testid": "room-cast", onclick: () => void this.castRoom() }, [
          "Broadcast",
        ]),
      ]),
      el("p", { "data-testid": "room-note" }, []),
      el("h3", {}, ["Join a room"]),
      el("div", {}, [
        el("input", { "data-testid": "join-room-id", placeholder: "room id (hex)" }),
        el("input", { "data-testid": "join-host", placeholder: "host endpoint (hex)" }),
        el("button", { "data-testid": "room-join", onclick: () => void this.joinRoom() }, [
          "Join",
        ]),
      ]),
    );
  }

  private async hostRoom(): Promise<void> {
    const note = this.q("room-note");
    try {
      this.hostedRoom = await this.client.roomHost();
      this.q("room-info").textContent =
        `Room ${this.hostedRoom.roomId} on endpoint ${this.hostedRoom.hostEndpoint}`;
      await this.refreshRoomStatus();
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  private async refreshRoomStatus(): Promise<void> {
    if (!this.hostedRoom) return;
    const status = await this.client.roomStatus(this.hostedRoom.roomId);
    this.q("room-members").textContent =
      `${status.members} joined, next broadcast #${status.nextSeq}, ${status.open ? "open" : "closed"}`;
  }

  private async castRoom(): Promise<void> {
    const note = this.q("room-note");
    if (!this.hostedRoom) {
      note.textContent = "Host a room first.";
      return;
    }
    try {
      const report = await this.client.roomCast(
        this.hostedRoom.roomId,
        this.q<HTMLInputElement>("cast-profile").value,
      );
      note.textContent = `Broadcast #${report.seq}: delivered ${report.delivered}/${report.total}.`;
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  private async joinRoom(): Promise<void> {
    const note = this.q("room-note");
    try {
      const hostCode = await this.client.roomJoin(
        this.q<HTMLInputElement>("join-room-id").value,
        this.q<HTMLInputElement>("join-host").value,
      );
      note.textContent = `Joined; cards from ${hostCode} will be saved as they arrive.`;
    } catch (err) {
      note.textContent = describe(err);
    }
  }

  // -- Contacts ------------------------------------------------------------

  private buildContacts(): void {
    const body = this.bodies.get("contacts")!;
    body.append(
      el("h2", {}, ["Contacts"]),
      el("div", {}, [
        el("input", { "data-testid": "filter-text", placeholder: "free text" }),
        el("input", { "data-testid": "filter-class", placeholder: "classification" }),
        el(
          "button",
          { "data-testid": "contacts-search", onclick: () => void this.refreshContacts() },
          ["Search"],
        ),
      ]),
      el("ul", { "data-testid": "contact-list" }),
      el("pre", { "data-testid": "vcard-view" }, []),
    );
  }

  private async refreshContacts(): Promise<void> {
    const text = this.q<HTMLInputElement>("filter-text").value;
    const classification = this.q<HTMLInputElement>("filter-class").value;
    const entries =
      text || classification
        ? await this.client.contactSearch({ text, classification })
        : await this.client.contactList();
    const list = this.q("contact-list");
    list.replaceChildren(...entries.map((entry) => this.contactItem(entry)));
  }

  private contactItem(entry: ContactRow): HTMLElement {
    const label = el("input", { placeholder: "classification" }) as HTMLInputElement;
    label.value = entry.classification;
    return el("li", { "data-testid": `entry-${entry.entryId}` }, [
      `${entry.profileName} — from ${entry.sourceCode} via ${entry.transport}` +
        (entry.classification ? ` [${entry.classification}]` : ""),
      label,
      el(
        "button",
        {
          onclick: () =>
            void this.client
              .contactClassify(entry.entryId, label.value)
              .then(() => this.refreshContacts()),
        },
        ["set"],
      ),
      el(
        "button",
        {
          onclick: () =>
            void this.client.exportVcard(entry.entryId).then((text) => {
              this.q("vcard-view").textContent = text;
            }),
        },
        ["vCard"],
      ),
    ]);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.detail}`;
  return String(err);
}

export function mountApp(root: HTMLElement, options: AppOptions): App {
  return new App(root, options);
}
