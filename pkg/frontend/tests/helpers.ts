import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

/** Mount the real page markup so tests and production share one DOM. */
export function mountAppDom(): void {
  const html = readFileSync(join(here, "..", "index.html"), "utf-8");
  const match = html.match(/<body>([\s\S]*)<\/body>/);
  if (!match || match[1] === undefined) {
    throw new Error("index.html lost its body");
  }
  document.body.innerHTML = match[1].replace(/<script[\s\S]*?<\/script>/, "");
}

export async function waitFor(
  check: () => boolean,
  timeoutMs = 5000,
  label = "condition",
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${label}`);
    }
    await sleep(20);
  }
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function setInput(id: string, value: string): void {
  const el = document.getElementById(id) as HTMLInputElement | null;
  if (!el) {
    throw new Error(`no input #${id}`);
  }
  el.value = value;
  el.dispatchEvent(new Event("input", { bubbles: true }));
}

export function changeInput(id: string, value: string): void {
  const el = document.getElementById(id) as HTMLInputElement | null;
  if (!el) {
    throw new Error(`no input #${id}`);
  }
  el.value = value;
  el.dispatchEvent(new Event("change", { bubbles: true }));
}

export function submitForm(id: string): void {
  const form = document.getElementById(id) as HTMLFormElement | null;
  if (!form) {
    throw new Error(`no form #${id}`);
  }
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

export function candidateIds(): string[] {
  return [...document.querySelectorAll<HTMLButtonElement>("#candidates button.candidate")].map(
    (button) => button.dataset.id ?? "",
  );
}

export function textOf(id: string): string {
  return document.getElementById(id)?.textContent ?? "";
}
