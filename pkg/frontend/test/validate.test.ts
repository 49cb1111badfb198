import { describe, expect, it } from "vitest";
import { parseRuleForm, validateLink } from "../src/validate.js";

describe("parseRuleForm", () => {
  it("accepts a bruceton rule and carries the kind", () => {
    const { rule, errors } = parseRuleForm("bruceton", { x1: "2.0", d: "0.25" });
    expect(errors).toEqual([]);
    expect(rule).toEqual({ kind: "bruceton", x1: 2.0, d: 0.25 });
  });

  it("rejects a non-positive step on the d field", () => {
    for (const d of ["0", "-1"]) {
      const { rule, errors } = parseRuleForm("bruceton", { x1: "0", d });
      expect(rule).toBeNull();
      expect(errors).toEqual([{ field: "d", message: "step d must be positive" }]);
    }
  });

  it("applies the same step check to the reverse rule", () => {
    const { errors } = parseRuleForm("reverse_bruceton", { x1: "0", d: "0" });
    expect(errors[0]?.field).toBe("d");
  });

  it("rejects blank and non-numeric input field by field", () => {
    const { rule, errors } = parseRuleForm("bruceton", { x1: "", d: "abc" });
    expect(rule).toBeNull();
    expect(errors).toEqual([
      { field: "x1", message: "x1 must be a number" },
      { field: "d", message: "d must be a number" },
    ]);
  });

  it("checks the robbins_monro gain and quantile ranges", () => {
    const bad = parseRuleForm("robbins_monro", { x1: "0", c: "0", q: "1.5" });
    expect(bad.errors).toEqual([
      { field: "c", message: "gain constant c must be positive" },
      { field: "q", message: "target quantile q must lie in (0, 1)" },
    ]);
    const ok = parseRuleForm("robbins_monro", { x1: "1.0", c: "4", q: "0.5" });
    expect(ok.errors).toEqual([]);
    expect(ok.rule).toEqual({ kind: "robbins_monro", x1: 1.0, c: 4, q: 0.5 });
  });

  it("rejects langlie eps at half the bound width", () => {
    const { rule, errors } = parseRuleForm("langlie", { a: "0", b: "1", eps: "0.6" });
    expect(rule).toBeNull();
    expect(errors).toEqual([
      { field: "eps", message: "eps must lie strictly in (0, (b - a) / 2)" },
    ]);
  });

  it("rejects reversed langlie bounds before looking at eps", () => {
    const { errors } = parseRuleForm("langlie", { a: "1", b: "0", eps: "0.1" });
    expect(errors).toEqual([{ field: "a", message: "bounds must satisfy a < b" }]);
  });

  it("accepts a valid langlie rule", () => {
    const { rule, errors } = parseRuleForm("langlie", { a: "0", b: "1", eps: "0.1" });
    expect(errors).toEqual([]);
    expect(rule).toEqual({ kind: "langlie", a: 0, b: 1, eps: 0.1 });
  });

  it("flags an unknown kind", () => {
    const { rule, errors } = parseRuleForm("updown", { d: "1" });
    expect(rule).toBeNull();
    expect(errors[0]?.field).toBe("kind");
  });
});

describe("validateLink", () => {
  it("accepts the two supported links", () => {
    expect(validateLink("logit")).toBeNull();
    expect(validateLink("probit")).toBeNull();
  });

  it("rejects anything else", () => {
    const err = validateLink("cauchy");
    expect(err?.field).toBe("link");
    expect(err?.message).toContain("cauchy");
  });
});
