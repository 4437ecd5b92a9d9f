import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every pipeline test shells out to the CLI, so budgets are generous
    testTimeout: 600_000,
    hookTimeout: 120_000,
  },
});
