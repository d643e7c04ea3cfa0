/** Zod schemas mirroring the review service's JSON wire format.
 *
 * Inbound schemas (responses) are parsed defensively so that a drifting or
 * misconfigured server surfaces as a clear wire-format error instead of
 * undefined reads deep in the UI. The outbound schema (VerdictRequest) is
 * the client's copy of the service contract: every request body the UI
 * emits must parse against it before it is allowed on the wire.
 */

import { z } from "zod";

// ---------------------------------------------------------------------------
// Shared fragments

export const SpanWire = z
  .object({
    tag: z.string().min(1),
    start: z.number().int().nonnegative(),
    end: z.number().int().positive(),
  })
  .refine((s) => s.end > s.start, {
    message: "span end must be greater than start",
  });
export type SpanWire = z.infer<typeof SpanWire>;

export const AnnotationWire = z.object({
  instance_id: z.string(),
  act_present: z.boolean(),
  spans: z.array(SpanWire),
  provenance: z.string(),
});
export type AnnotationWire = z.infer<typeof AnnotationWire>;

export const TagDefWire = z.object({
  name: z.string(),
  definition: z.string(),
  open_class: z.boolean(),
  is_ifid: z.boolean(),
});
export type TagDefWire = z.infer<typeof TagDefWire>;

export const SchemeWire = z.object({
  act_name: z.string(),
  marker_lexemes: z.array(z.string()),
  tags: z.array(TagDefWire),
  no_act_label: z.string(),
});
export type SchemeWire = z.infer<typeof SchemeWire>;

// ---------------------------------------------------------------------------
// GET /api/runs and /api/runs/{run_id}

export const RunManifestWire = z.object({
  run_id: z.string(),
  created_at: z.string(),
  scheme_hash: z.string(),
  prompt_hash: z.string(),
  backend: z.string(),
  instance_count: z.number().int(),
  status_counts: z.record(z.string(), z.number().int()),
});
export type RunManifestWire = z.infer<typeof RunManifestWire>;

export const RunsResponse = z.object({
  runs: z.array(RunManifestWire),
});
export type RunsResponse = z.infer<typeof RunsResponse>;

export const RunDetailResponse = z.object({
  manifest: RunManifestWire,
  scheme: SchemeWire,
  integrity_warnings: z.array(z.string()),
});
export type RunDetailResponse = z.infer<typeof RunDetailResponse>;

// ---------------------------------------------------------------------------
// GET /api/runs/{run_id}/instances (the review queue, paged)

export const QueueItemWire = z.object({
  instance_id: z.string(),
  status: z.string(),
  coverage: z.number().nullable(),
  reviewed: z.boolean(),
});
export type QueueItemWire = z.infer<typeof QueueItemWire>;

export const QueuePageResponse = z.object({
  total: z.number().int().nonnegative(),
  offset: z.number().int().nonnegative(),
  limit: z.number().int().positive(),
  items: z.array(QueueItemWire),
});
export type QueuePageResponse = z.infer<typeof QueuePageResponse>;

// ---------------------------------------------------------------------------
// GET /api/runs/{run_id}/instances/{instance_id}

export const InstanceWire = z.object({
  id: z.string(),
  tokens: z.array(z.string()).min(1),
  marker_positions: z.array(z.number().int().nonnegative()),
  source_span: z.object({
    source_id: z.string(),
    start: z.number().int(),
    end: z.number().int(),
  }),
});
export type InstanceWire = z.infer<typeof InstanceWire>;

export const PredictionWire = z.object({
  instance_id: z.string(),
  status: z.string(),
  annotation: AnnotationWire.nullable(),
  coverage: z.number().nullable(),
  diagnostics: z.array(z.string()),
});
export type PredictionWire = z.infer<typeof PredictionWire>;

export const TranscriptWire = z.object({
  instance_id: z.string(),
  backend: z.string(),
  turns: z.array(z.object({ role: z.string(), text: z.string() })),
  started_at: z.string(),
  ended_at: z.string(),
  attempt_count: z.number().int(),
});
export type TranscriptWire = z.infer<typeof TranscriptWire>;

export const VerdictWire = z.object({
  instance_id: z.string(),
  reviewer_id: z.string(),
  action: z.string(),
  act_present: z.boolean().nullable(),
  spans: z.array(SpanWire).nullable(),
  submitted_at: z.string(),
  sequence: z.number().int(),
});
export type VerdictWire = z.infer<typeof VerdictWire>;

export const InstanceDetailResponse = z.object({
  instance: InstanceWire,
  prediction: PredictionWire.nullable(),
  transcript: TranscriptWire.nullable(),
  latest_verdict: VerdictWire.nullable(),
});
export type InstanceDetailResponse = z.infer<typeof InstanceDetailResponse>;

// ---------------------------------------------------------------------------
// POST /api/runs/{run_id}/instances/{instance_id}/verdict

export const VerdictAction = z.enum(["ACCEPT", "CORRECT", "MARK_NO_ACT"]);
export type VerdictAction = z.infer<typeof VerdictAction>;

/** The outbound verdict body. Shape mirrors the service's request model;
 * the cross-field rules mirror the service's documented semantics, so a
 * body this schema rejects would be rejected by the service as well. */
export const VerdictRequest = z
  .object({
    reviewer_id: z.string().min(1),
    action: VerdictAction,
    act_present: z.boolean().optional(),
    spans: z.array(SpanWire).optional(),
  })
  .strict()
  .superRefine((body, ctx) => {
    if (body.action === "MARK_NO_ACT" && body.spans && body.spans.length > 0) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        message: "MARK_NO_ACT forbids spans",
      });
    }
    if (
      body.action === "CORRECT" &&
      (body.act_present === undefined || body.spans === undefined)
    ) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        message: "CORRECT requires act_present and spans",
      });
    }
  });
export type VerdictRequest = z.infer<typeof VerdictRequest>;

export const VerdictResponse = z.object({
  verdict: VerdictWire,
});
export type VerdictResponse = z.infer<typeof VerdictResponse>;

// ---------------------------------------------------------------------------
// GET /api/runs/{run_id}/metrics

export const MetricsRowWire = z.object({
  category: z.string(),
  tp: z.number().int().nonnegative(),
  fp: z.number().int().nonnegative(),
  fn: z.number().int().nonnegative(),
  precision: z.number().nullable(),
  recall: z.number().nullable(),
  f1: z.number().nullable(),
});
export type MetricsRowWire = z.infer<typeof MetricsRowWire>;

export const MetricsResponse = z.object({
  report: z.object({
    n_instances: z.number().int().nonnegative(),
    n_correct: z.number().int().nonnegative(),
    instance_accuracy: z.number().nullable(),
    rows: z.array(MetricsRowWire),
    errors: z.array(
      z.object({ instance_id: z.string(), tag: z.string(), kind: z.string() })
    ),
  }),
  progress: z.object({
    total: z.number().int().nonnegative(),
    reviewed: z.number().int().nonnegative(),
    pending: z.number().int().nonnegative(),
    failed: z.number().int().nonnegative(),
    scored: z.number().int().nonnegative(),
  }),
});
export type MetricsResponse = z.infer<typeof MetricsResponse>;

// ---------------------------------------------------------------------------
// Error bodies (400/404/422)

export const ErrorBody = z.object({
  detail: z.string(),
  violations: z.array(z.string()).optional(),
});
export type ErrorBody = z.infer<typeof ErrorBody>;
