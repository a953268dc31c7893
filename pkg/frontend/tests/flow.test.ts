// @vitest-environment happy-dom
//
// Scripted browser session against a real two-node demo world: enter a
// length-1 code (inline rejection), enter Wa10 (receive the card), classify
// it "conference", and find it again through the classification filter.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, expect, test } from "vitest";

import { mountApp, type App } from "../src/app.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const DEMO = resolve(HERE, "..", "..", "scripts", "run_demo.py");

let proc: ChildProcess | undefined;
let baseUrl = "";
let token = "";
let baseUrlB = "";
let tokenB = "";
const demoLines: string[] = [];

async function until<T>(probe: () => T | null | undefined | false, timeoutMs = 30_000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = probe();
    if (value) return value;
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "gfcx-ui-demo-"));
  proc = spawn(
    "python3",
    [DEMO, "--dir", dir, "--http-port", "0", "--http-port-b", "0", "--print-otp"],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  proc.stdout!.on("data", (chunk: Buffer) => {
    for (const line of chunk.toString().split("\n")) {
      if (line.trim()) demoLines.push(line.trim());
    }
  });
  const stderr: string[] = [];
  proc.stderr!.on("data", (chunk: Buffer) => stderr.push(chunk.toString()));

  try {
    await until(() => {
      const ready = demoLines.find((l) => l.startsWith("READY|A|"));
      const readyB = demoLines.find((l) => l.startsWith("READY|B|"));
      const http = demoLines.find((l) => l.startsWith("HTTP|"));
      const httpB = demoLines.find((l) => l.startsWith("HTTPB|"));
      if (!ready || !readyB || !http || !httpB) return false;
      token = readFileSync(ready.split("|")[3], "utf-8").trim();
      tokenB = readFileSync(readyB.split("|")[3], "utf-8").trim();
      baseUrl = `http://127.0.0.1:${http.split("|")[1]}`;
      baseUrlB = `http://127.0.0.1:${httpB.split("|")[1]}`;
      return true;
    });
  } catch (err) {
    throw new Error(`demo did not start: ${demoLines.join(" / ")} ${stderr.join("")}`);
  }
});

afterAll(() => {
  proc?.kill();
});

function q<T extends HTMLElement>(testId: string): T {
  const node = document.querySelector(`[data-testid="${testId}"]`);
  if (!node) throw new Error(`missing element ${testId}`);
  return node as T;
}

function type(testId: string, value: string): void {
  const input = q<HTMLInputElement>(testId);
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

test("exchange figures: ask, receive, classify, and find again", async () => {
  document.body.innerHTML = "";
  const app: App = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  try {
    q("tab-exchange").click();

    // A one-character code is rejected inline and cannot be submitted.
    type("code-input", "A");
    expect(q("code-error").textContent).toMatch(/too short/);
    expect(q<HTMLButtonElement>("exchange-confirm").disabled).toBe(true);

    // The real code enables the confirm button.
    type("code-input", "Wa10");
    expect(q("code-error").textContent).toBe("");
    expect(q<HTMLButtonElement>("exchange-confirm").disabled).toBe(false);

    q("exchange-confirm").click();
    await until(() => document.querySelector('[data-testid="card-source"]'));
    expect(q("card-source").textContent).toContain("Wa10");

    // Save & classify the received card.
    type("classify-input", "conference");
    q("classify-save").click();
    await until(() => q("classify-note").textContent?.includes("classified"));

    // The contacts browser finds it through the classification filter.
    q("tab-contacts").click();
    type("filter-class", "conference");
    q("contacts-search").click();
    await until(() => {
      const items = document.querySelectorAll('[data-testid^="entry-"]');
      return (
        items.length === 1 &&
        items[0].textContent!.includes("Wa10") &&
        items[0].textContent!.includes("[conference]")
      );
    });

    // A filter that matches nothing yields an empty browser.
    type("filter-class", "nothing-here");
    q("contacts-search").click();
    await until(() => document.querySelectorAll('[data-testid^="entry-"]').length === 0);
  } finally {
    app.stop();
  }
});

test("my-code screen reflects registration status from the API", async () => {
  document.body.innerHTML = "";
  const app: App = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  try {
    q("tab-mycode").click();
    await until(() => q("code-status").textContent?.includes("unregistered"));
  } finally {
    app.stop();
  }
});

test("registering through the my-code screen, then hosting a room", async () => {
  document.body.innerHTML = "";
  const app: App = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  try {
    // Hosting needs an identity: claim a code through the UI first. The
    // OTP arrives through the demo's surfaced SMS stand-in lines.
    const phone = "+15550004444";
    q("tab-mycode").click();
    type("register-code", "Ui42");
    type("register-phone", phone);
    q("register-submit").click();
    await until(() => q("register-note").textContent?.includes("OTP"));
    const otpLine = await until(() =>
      demoLines.find((l) => l.startsWith(`OTP|${phone}|`)),
    );
    type("register-otp", otpLine.split("|")[2]);
    q("register-verify").click();
    await until(() => q("register-note").textContent?.includes("active"));
    await until(() => q("code-status").textContent?.includes("Ui42"));

    q("tab-room").click();
    q("room-host").click();
    await until(() => q("room-members").textContent?.includes("0 joined"));
    expect(q("room-info").textContent).toMatch(/Room [0-9a-f]{32}/);
  } finally {
    app.stop();
  }
});

test("ask-first requests surface in the approvals screen and approving completes the peer", async () => {
  // Depends on the previous test: this node now owns the code Ui42.
  document.body.innerHTML = "";
  const app: App = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  try {
    // Create the profile to hand out, through the profile editor.
    q("tab-profiles").click();
    type("profile-name", "mine");
    q<HTMLTextAreaElement>("profile-fields").value = "EMAIL=me@example.org";
    q("profile-create").click();
    await until(() => q("profile-note").textContent?.includes("Created"));

    // Switch the node to ask-first (policy has no screen; direct API call).
    const profiles = await app.client.profileList();
    const mine = profiles.find((p) => p.name === "mine")!;
    await app.client.call("policy_set", [`RULE|default|ANY|${mine.id}|ASK`]);

    // Node B asks for Ui42; its API call blocks until we decide.
    const exchangePromise = fetch(`${baseUrlB}/api/exchange`, {
      method: "POST",
      body: `TOKEN|${tokenB}\nCODE|Ui42`,
    });

    q("tab-approvals").click();
    const item = await until(() =>
      document.querySelector('[data-testid^="pending-"]'),
    );
    expect(item.textContent).toContain("asks for your card");

    (item.querySelectorAll("button")[0] as HTMLButtonElement).click(); // approve
    const reply = await exchangePromise;
    expect(reply.status).toBe(200);
    expect(await reply.text()).toMatch(/^SAVED\|/);
    await until(() => document.querySelectorAll('[data-testid^="pending-"]').length === 0);
  } finally {
    app.stop();
  }
});

test("reloading the page reproduces state from the API alone", async () => {
  document.body.innerHTML = "";
  let app: App = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  app.stop();

  // Remount from scratch: the conference card is still there.
  document.body.innerHTML = "";
  app = mountApp(document.body, { baseUrl, token, pollMs: 250 });
  try {
    q("tab-contacts").click();
    type("filter-class", "conference");
    q("contacts-search").click();
    await until(
      () =>
        Array.from(document.querySelectorAll('[data-testid^="contact-"]')).filter((node) =>
          node.textContent!.includes("[conference]"),
        ).length >= 1,
    );
  } finally {
    app.stop();
  }
});
