import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the end-to-end test spawns the Python service and drives whole sessions
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
