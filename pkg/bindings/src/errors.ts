/** Exceptions carrying the CLI's error taxonomy. */

/**
 * Error whose `name` is the error class reported by the sidonforge CLI,
 * either on stderr as `error[Name]: message` or in a failures.jsonl entry.
 */
export class PipelineError extends Error {
  constructor(name: string, message: string) {
    super(message);
    this.name = name;
  }
}

const STDERR_PATTERN = /^error\[(\w+)\]: (.*)$/m;

/** Parse the first `error[Name]: message` line, if any. */
export function errorFromStderr(stderr: string): PipelineError | undefined {
  const match = STDERR_PATTERN.exec(stderr);
  if (!match) {
    return undefined;
  }
  return new PipelineError(match[1], match[2]);
}
