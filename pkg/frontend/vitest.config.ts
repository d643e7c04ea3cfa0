import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // The review-loop suite boots the Python review service and walks a
    // 50-instance fixture run over real HTTP, so allow generous timeouts.
    testTimeout: 120_000,
    hookTimeout: 120_000,
    // Test files share no state, but the live-service suite relies on
    // in-file ordering, so keep execution sequential and deterministic.
    fileParallelism: false,
  },
});
