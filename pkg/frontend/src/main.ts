/** Browser entry point: asks for the node token once, then mounts the app. */

import { mountApp } from "./app.js";

const TOKEN_KEY = "gfcx-token";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const token = window.localStorage.getItem(TOKEN_KEY);
  if (token) {
    mountApp(root, { baseUrl: "", token });
    return;
  }
  const input = document.createElement("input");
  input.placeholder = "paste the node token (from its token file)";
  input.size = 48;
  const button = document.createElement("button");
  button.textContent = "Connect";
  button.addEventListener("click", () => {
    window.localStorage.setItem(TOKEN_KEY, input.value.trim());
    root.replaceChildren();
    mountApp(root, { baseUrl: "", token: input.value.trim() });
  });
  root.append(input, button);
}

boot();
