// Thin client over the prediction service. A fetch implementation is
// injected so tests can count requests and script responses.

import type { InstancesPage, Intervention, ModelInfo, PredictResponse } from './types.js'

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export class ApiClient {
  private base: string
  private fetchImpl: FetchLike
  predictCount = 0

  constructor(base = '', fetchImpl: FetchLike = (u, i) => fetch(u, i)) {
    this.base = base.replace(/\/$/, '')
    this.fetchImpl = fetchImpl
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.base + path)
    if (!res.ok) throw await this.toError(res)
    return (await res.json()) as T
  }

  private async toError(res: Response): Promise<Error> {
    let detail = res.statusText
    try {
      const body = await res.json()
      if (body && typeof body.detail === 'string') detail = body.detail
    } catch {
      // non-JSON error body; keep the status text
    }
    return new Error(`HTTP ${res.status}: ${detail}`)
  }

  model(): Promise<ModelInfo> {
    return this.getJson<ModelInfo>('/model')
  }

  instances(split = 'test', offset = 0, limit = 20): Promise<InstancesPage> {
    return this.getJson<InstancesPage>(
      `/instances?split=${encodeURIComponent(split)}&offset=${offset}&limit=${limit}`,
    )
  }

  suggest(already: string[]): Promise<{ suggestion: string | null }> {
    return this.getJson<{ suggestion: string | null }>(
      `/suggest?already=${encodeURIComponent(already.join(','))}`,
    )
  }

  async predict(
    instanceId: number,
    alpha: number,
    interventions: Intervention[],
  ): Promise<PredictResponse> {
    this.predictCount += 1
    const res = await this.fetchImpl(this.base + '/predict', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ instance_id: instanceId, alpha, interventions }),
    })
    if (!res.ok) throw await this.toError(res)
    return (await res.json()) as PredictResponse
  }
}
