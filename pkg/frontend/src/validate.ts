/**
 * Client-side copy of the design-rule checks the service applies, so bad
 * input is caught before a request goes out. Field names and messages
 * match the server's 422 bodies; anything that slips through still gets
 * rendered from the server response.
 */

export const RULE_FIELDS: Record<string, readonly string[]> = {
  bruceton: ["x1", "d"],
  reverse_bruceton: ["x1", "d"],
  robbins_monro: ["x1", "c", "q"],
  langlie: ["a", "b", "eps"],
};

export const RULE_KINDS = Object.keys(RULE_FIELDS);

export const LINKS = ["logit", "probit"] as const;

export interface FieldError {
  field: string;
  message: string;
}

export interface ParsedRuleForm {
  rule: Record<string, number | string> | null;
  errors: FieldError[];
}

export function parseRuleForm(
  kind: string,
  raw: Record<string, string>,
): ParsedRuleForm {
  const fields = RULE_FIELDS[kind];
  if (!fields) {
    return { rule: null, errors: [{ field: "kind", message: `unknown design kind: '${kind}'` }] };
  }
  const errors: FieldError[] = [];
  const values: Record<string, number> = {};
  for (const f of fields) {
    const text = (raw[f] ?? "").trim();
    const v = text === "" ? NaN : Number(text);
    if (!Number.isFinite(v)) {
      errors.push({ field: f, message: `${f} must be a number` });
    } else {
      values[f] = v;
    }
  }
  if (errors.length > 0) return { rule: null, errors };
  errors.push(...checkRuleValues(kind, values));
  if (errors.length > 0) return { rule: null, errors };
  return { rule: { kind, ...values }, errors: [] };
}

function checkRuleValues(
  kind: string,
  v: Record<string, number>,
): FieldError[] {
  const errors: FieldError[] = [];
  if (kind === "bruceton" || kind === "reverse_bruceton") {
    if (!((v.d ?? NaN) > 0)) {
      errors.push({ field: "d", message: "step d must be positive" });
    }
  } else if (kind === "robbins_monro") {
    if (!((v.c ?? NaN) > 0)) {
      errors.push({ field: "c", message: "gain constant c must be positive" });
    }
    const q = v.q ?? NaN;
    if (!(q > 0 && q < 1)) {
      errors.push({ field: "q", message: "target quantile q must lie in (0, 1)" });
    }
  } else if (kind === "langlie") {
    const a = v.a ?? NaN;
    const b = v.b ?? NaN;
    const eps = v.eps ?? NaN;
    if (!(a < b)) {
      errors.push({ field: "a", message: "bounds must satisfy a < b" });
    } else if (!(eps > 0 && eps < (b - a) / 2)) {
      errors.push({ field: "eps", message: "eps must lie strictly in (0, (b - a) / 2)" });
    }
  }
  return errors;
}

export function validateLink(link: string): FieldError | null {
  if ((LINKS as readonly string[]).includes(link)) return null;
  return { field: "link", message: `unknown link '${link}'` };
}
