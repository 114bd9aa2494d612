import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration test boots the real service (first request may jit)
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
