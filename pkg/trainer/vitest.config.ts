import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the two-stage and steering runs train real (tiny) models on CPU
    testTimeout: 1_200_000,
    hookTimeout: 600_000,
    pool: "forks",
    fileParallelism: false,
  },
});
