import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    testTimeout: 20_000,
    hookTimeout: 240_000,
    // the integration suite owns a single live server; keep files sequential
    fileParallelism: false,
  },
});
