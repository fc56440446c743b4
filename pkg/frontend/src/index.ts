export {
  ApiError,
  ByteRange,
  CreateSessionRequest,
  FetchLike,
  LabServiceClient,
  SessionHandle,
  StimulusChunk,
  SubmitRejected,
} from "./api";
export {
  AudioSink,
  ConditionPlayer,
  createWebAudioSink,
  runVolumeCheck,
  StimulusFetcher,
} from "./audio";
export {
  AnswerProvider,
  RunnerOptions,
  RunResult,
  SessionRunner,
  StepTransport,
  SubmitOutcome,
} from "./runner";
export {
  Ack,
  ackSchema,
  CLIENT_SCHEMA_VERSION,
  ExportBundle,
  exportBundleSchema,
  FORBIDDEN_PAYLOAD_KEYS,
  Health,
  healthSchema,
  InstrumentDefinition,
  InstrumentItem,
  NextResponse,
  nextResponseSchema,
  scoringLeaks,
  SessionCreated,
  sessionCreatedSchema,
  SessionStatus,
  sessionStatusSchema,
  Step,
  StepKind,
  stepSchema,
  StimulusRef,
  stimulusRefSchema,
} from "./schemas";
export {
  answerProblems,
  buildStepView,
  InstrumentView,
  presentationSchedule,
  RecallView,
  RestView,
  SpanView,
  StepAnswer,
  StepView,
  StroopView,
  wirePayload,
  WordPresentation,
} from "./steps";
export { Clock, TimingMarks } from "./timing";
export { dpTable, DpTable, performanceTable, PerformanceTable } from "./results";
