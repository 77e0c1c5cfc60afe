import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["test/global_setup.ts"],
    testTimeout: 30_000,
    hookTimeout: 180_000,
  },
});
