import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // the e2e file talks to a locally spawned session service on
        // another port; the service does not speak CORS preflight
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
