import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    testTimeout: 120_000,
    hookTimeout: 120_000,
    // e2e flows talk to one live service; keep files sequential
    fileParallelism: false,
  },
});
