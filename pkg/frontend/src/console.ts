/**
 * Operator console for one live experiment. The service is the single
 * source of truth: the view is rebuilt from GET /sessions/{id} after
 * every action, so a reload (or a second tab) reconstructs exactly what
 * the server holds. Outcome entry is two buttons with a confirm step,
 * because a physical trial cannot be repeated.
 */

import type { Estimate, SessionView } from "./api.js";
import { ApiError, SessionClient } from "./api.js";
import { bannerText, formatInterval, formatLevel, formatNumber } from "./format.js";
import { renderStaircase, staircaseState } from "./staircase.js";
import type { FieldError } from "./validate.js";
import { LINKS, RULE_FIELDS, RULE_KINDS, parseRuleForm, validateLink } from "./validate.js";

const REASON_TEXT: Record<string, string> = {
  too_few: "needs mixed outcomes at two or more levels",
  separated: "responses and non-responses do not overlap yet",
  singular: "the outcome pattern does not pin down a curve yet",
  not_converged: "the fit did not converge on this data",
  degenerate: "the fitted slope is unusable for intervals",
};

const FIELD_HINTS: Record<string, string> = {
  x1: "first level",
  d: "step size",
  c: "gain constant",
  q: "target quantile",
  a: "lower bound",
  b: "upper bound",
  eps: "perturbation",
};

export interface ConsoleOptions {
  root: HTMLElement;
  client: SessionClient;
  pollMs?: number;
  windowRef?: Pick<Window, "location"> | null;
}

export class ExperimentConsole {
  private readonly root: HTMLElement;
  private readonly client: SessionClient;
  private readonly pollMs: number;
  private readonly windowRef: Pick<Window, "location"> | null;

  private view: SessionView | null = null;
  private estimate: Estimate | null = null;
  private pending: 0 | 1 | null = null;
  private inFlight = false;
  private warning = "";
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private ops: Promise<void> = Promise.resolve();

  constructor(options: ConsoleOptions) {
    this.root = options.root;
    this.client = options.client;
    this.pollMs = options.pollMs ?? 2000;
    this.windowRef = options.windowRef ?? null;
  }

  /** Mount the console; resumes the session named in the URL hash. */
  async start(): Promise<void> {
    this.renderSetup();
    const hash = this.windowRef?.location.hash ?? "";
    const sid = hash.startsWith("#") ? hash.slice(1) : hash;
    if (sid) await this.load(sid);
  }

  /** Tear down the poll timer; the DOM is left as-is. */
  stop(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  /** Settles when every queued user action so far has finished. */
  idle(): Promise<void> {
    return this.ops;
  }

  private enqueue(fn: () => Promise<void>): void {
    this.ops = this.ops.then(fn).catch((err) => {
      this.warning = err instanceof Error ? err.message : String(err);
      if (this.view) this.renderRun();
    });
  }

  // -- session lifecycle ---------------------------------------------------

  private async load(sid: string): Promise<void> {
    try {
      const [view, estimate] = await Promise.all([
        this.client.getSession(sid),
        this.client.getEstimate(sid),
      ]);
      this.adopt(view, estimate);
    } catch (err) {
      this.setFieldError("form", describeError(err));
    }
  }

  private async create(
    rule: Record<string, number | string>,
    link: string,
  ): Promise<void> {
    try {
      const view = await this.client.createSession(rule, link);
      const estimate = await this.client.getEstimate(view.id);
      this.adopt(view, estimate);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422 && err.body.field) {
        this.setFieldError(err.body.field, err.body.message);
      } else {
        this.setFieldError("form", describeError(err));
      }
    }
  }

  private adopt(view: SessionView, estimate: Estimate): void {
    this.view = view;
    this.estimate = estimate;
    this.warning = "";
    if (this.windowRef) this.windowRef.location.hash = view.id;
    this.mountRun();
    this.renderRun();
    this.startPolling();
  }

  private async refresh(): Promise<void> {
    if (!this.view) return;
    const id = this.view.id;
    const [view, estimate] = await Promise.all([
      this.client.getSession(id),
      this.client.getEstimate(id),
    ]);
    this.view = view;
    this.estimate = estimate;
    this.renderRun();
  }

  // -- outcome entry -------------------------------------------------------

  private press(y: 0 | 1): void {
    if (!this.view || this.view.status !== "active") return;
    if (this.inFlight || this.pending !== null) return;
    this.pending = y;
    this.renderRun();
  }

  private cancelPending(): void {
    this.pending = null;
    this.renderRun();
  }

  private async confirmPending(): Promise<void> {
    // a second click finds pending already cleared: exactly one record
    if (this.pending === null || this.inFlight || !this.view) return;
    const y = this.pending;
    const view = this.view;
    if (view.next_trial_index === null) return;
    this.pending = null;
    this.inFlight = true;
    this.renderRun();
    try {
      await this.client.recordOutcome(view.id, y, view.next_trial_index);
      this.warning = "";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.warning =
          err.body.code === "stale_trial_index"
            ? `trial ${view.next_trial_index} was already recorded elsewhere; ` +
              "nothing was overwritten, showing the latest state"
            : err.body.message;
      } else {
        this.warning = describeError(err);
      }
    } finally {
      this.inFlight = false;
    }
    // refetch either way; on conflict this pulls in the other writer's trial
    await this.refresh();
  }

  private async closeSession(): Promise<void> {
    if (!this.view) return;
    try {
      this.view = await this.client.closeSession(this.view.id);
      this.stop();
    } catch (err) {
      this.warning = describeError(err);
    }
    this.renderRun();
  }

  // -- polling ---------------------------------------------------------------

  private startPolling(): void {
    this.stop();
    if (this.pollMs <= 0) return;
    this.pollTimer = setInterval(() => {
      void this.pollEstimate();
    }, this.pollMs);
  }

  private async pollEstimate(): Promise<void> {
    if (!this.view || this.view.status !== "active" || this.inFlight) return;
    try {
      this.estimate = await this.client.getEstimate(this.view.id);
      this.renderRun();
    } catch {
      // transient; the next tick retries
    }
  }

  // -- setup form ------------------------------------------------------------

  private renderSetup(): void {
    const kindOptions = RULE_KINDS.map(
      (k) => `<option value="${k}">${k.replace("_", " ")}</option>`,
    ).join("");
    const linkOptions = LINKS.map(
      (l) => `<option value="${l}">${l}</option>`,
    ).join("");
    this.root.innerHTML = `
      <div class="setup">
        <h1>experiment console</h1>
        <form id="setup-form" novalidate>
          <label>design
            <select name="kind">${kindOptions}</select>
          </label>
          <div id="rule-fields"></div>
          <label>link
            <select name="link">${linkOptions}</select>
          </label>
          <p class="field-error" data-error-for="link"></p>
          <button type="submit" id="btn-start">start session</button>
          <p class="field-error" data-error-for="form"></p>
        </form>
        <form id="resume-form">
          <label>resume session
            <input name="sid" placeholder="session id">
          </label>
          <button type="submit" id="btn-resume">load</button>
        </form>
      </div>
      <div class="run" hidden></div>
    `;
    const form = this.q<HTMLFormElement>("#setup-form");
    const kindSelect = this.q<HTMLSelectElement>('select[name="kind"]');
    kindSelect.addEventListener("change", () => this.renderRuleFields(kindSelect.value));
    this.renderRuleFields(kindSelect.value);
    form.addEventListener("submit", (e) => {
      e.preventDefault();
      this.enqueue(() => this.submitSetup());
    });
    this.q<HTMLFormElement>("#resume-form").addEventListener("submit", (e) => {
      e.preventDefault();
      const sid = this.q<HTMLInputElement>('input[name="sid"]').value.trim();
      if (sid) this.enqueue(() => this.load(sid));
    });
  }

  private renderRuleFields(kind: string): void {
    const fields = RULE_FIELDS[kind] ?? [];
    this.q("#rule-fields").innerHTML = fields
      .map(
        (f) => `
        <label>${f} <span class="hint">${FIELD_HINTS[f] ?? ""}</span>
          <input name="${f}" inputmode="decimal" autocomplete="off">
        </label>
        <p class="field-error" data-error-for="${f}"></p>`,
      )
      .join("");
  }

  private async submitSetup(): Promise<void> {
    this.clearFieldErrors();
    const kind = this.q<HTMLSelectElement>('select[name="kind"]').value;
    const link = this.q<HTMLSelectElement>('select[name="link"]').value;
    const raw: Record<string, string> = {};
    for (const f of RULE_FIELDS[kind] ?? []) {
      raw[f] = this.q<HTMLInputElement>(`input[name="${f}"]`).value;
    }
    const parsed = parseRuleForm(kind, raw);
    const errors: FieldError[] = [...parsed.errors];
    const linkError = validateLink(link);
    if (linkError) errors.push(linkError);
    if (errors.length > 0 || parsed.rule === null) {
      for (const e of errors) this.setFieldError(e.field, e.message);
      return;
    }
    await this.create(parsed.rule, link);
  }

  private clearFieldErrors(): void {
    for (const el of this.root.querySelectorAll("[data-error-for]")) {
      el.textContent = "";
    }
  }

  private setFieldError(field: string, message: string): void {
    const slot =
      this.root.querySelector(`[data-error-for="${field}"]`) ??
      this.root.querySelector('[data-error-for="form"]');
    if (slot) slot.textContent = message;
  }

  // -- running view ------------------------------------------------------------

  private mountRun(): void {
    const setup = this.root.querySelector<HTMLElement>(".setup");
    if (setup) setup.hidden = true;
    const run = this.q<HTMLElement>(".run");
    run.hidden = false;
    run.innerHTML = `
      <p class="session-meta">session <code id="sid"></code> <span id="rule-summary"></span></p>
      <p id="warning" class="warning" hidden></p>
      <p id="banner" class="banner"></p>
      <div id="outcome-controls">
        <button id="btn-explode">explode</button>
        <button id="btn-no-explode">no explode</button>
        <span id="confirm-bar" hidden>
          <span id="confirm-text"></span>
          <button id="btn-confirm">confirm</button>
          <button id="btn-cancel">cancel</button>
        </span>
      </div>
      <svg id="staircase" role="img" aria-label="staircase history"></svg>
      <div id="estimate-panel"></div>
      <table id="trials">
        <thead><tr><th>trial</th><th>level</th><th>outcome</th></tr></thead>
        <tbody></tbody>
      </table>
      <button id="btn-finish">finish session</button>
    `;
    this.q("#btn-explode").addEventListener("click", () => this.press(1));
    this.q("#btn-no-explode").addEventListener("click", () => this.press(0));
    this.q("#btn-confirm").addEventListener("click", () =>
      this.enqueue(() => this.confirmPending()),
    );
    this.q("#btn-cancel").addEventListener("click", () => this.cancelPending());
    this.q("#btn-finish").addEventListener("click", () =>
      this.enqueue(() => this.closeSession()),
    );
  }

  private renderRun(): void {
    const view = this.view;
    if (!view) return;
    const active = view.status === "active";

    this.q("#sid").textContent = view.id;
    this.q("#rule-summary").textContent = ruleSummary(view.rule);

    const warning = this.q<HTMLElement>("#warning");
    warning.hidden = this.warning === "";
    warning.textContent = this.warning;

    // the recommended level is shown only while the session is active
    const banner = this.q<HTMLElement>("#banner");
    if (active && view.next_level !== null) {
      banner.textContent = bannerText(view.next_level);
      banner.classList.remove("closed");
    } else {
      banner.textContent = `Session closed after ${view.trials.length} trials`;
      banner.classList.add("closed");
    }

    const busy = this.inFlight || this.pending !== null;
    this.q<HTMLButtonElement>("#btn-explode").disabled = !active || busy;
    this.q<HTMLButtonElement>("#btn-no-explode").disabled = !active || busy;
    this.q<HTMLButtonElement>("#btn-finish").disabled = !active || busy;

    const confirmBar = this.q<HTMLElement>("#confirm-bar");
    if (this.pending !== null && active && view.next_level !== null) {
      confirmBar.hidden = false;
      this.q("#confirm-text").textContent =
        `record ${this.pending === 1 ? "explode" : "no explode"} at ` +
        `${formatLevel(view.next_level)}? this cannot be undone.`;
    } else {
      confirmBar.hidden = true;
    }

    renderStaircase(
      this.q<SVGElement & HTMLElement>("#staircase"),
      staircaseState(view.trials, this.estimate),
    );
    this.renderEstimate(this.q<HTMLElement>("#estimate-panel"));

    const tbody = this.q<HTMLElement>("#trials tbody");
    tbody.innerHTML = view.trials
      .map(
        (t) =>
          `<tr><td>${t.index}</td><td>${formatLevel(t.x)}</td>` +
          `<td>${t.y === 1 ? "explode" : "no explode"}</td></tr>`,
      )
      .join("");
  }

  private renderEstimate(el: HTMLElement): void {
    const est = this.estimate;
    if (!est) {
      el.innerHTML = `<p class="muted">no estimate yet</p>`;
      return;
    }
    if (!est.estimable) {
      const why = REASON_TEXT[est.reason] ?? "";
      el.innerHTML =
        `<p class="not-estimable"><code>NOT_ESTIMABLE(${est.reason})</code> ` +
        `<span class="muted">${why} (n=${est.n})</span></p>`;
      return;
    }
    const [alpha, beta] = est.estimate.theta_hat;
    el.innerHTML = `
      <dl>
        <dt>level-${est.q} quantile</dt>
        <dd id="gamma-hat" class="gamma">${formatNumber(est.gamma_hat)}</dd>
        <dt>curve</dt>
        <dd>alpha ${formatNumber(alpha)}, beta ${formatNumber(beta)} (n=${est.estimate.n})</dd>
        <dt>wald ${est.level}</dt>
        <dd id="wald-interval">${formatInterval(est.wald.lower, est.wald.upper)}</dd>
        <dt>fieller ${est.level} (${est.fieller.kind})</dt>
        <dd id="fieller-interval">${formatInterval(est.fieller.lower, est.fieller.upper)}</dd>
      </dl>
    `;
  }

  private q<T extends Element = HTMLElement>(selector: string): T {
    const el = this.root.querySelector<T>(selector);
    if (!el) throw new Error(`console is missing ${selector}`);
    return el;
  }
}

function ruleSummary(rule: SessionView["rule"]): string {
  const parts = Object.entries(rule)
    .filter(([k]) => k !== "kind")
    .map(([k, v]) => `${k}=${v}`);
  return `${rule.kind} (${parts.join(", ")})`;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return err.body.message;
  return err instanceof Error ? err.message : String(err);
}
