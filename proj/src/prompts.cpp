/*
 * Copyright 2026 The kbopt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "kbopt/prompts.hpp"

#include <algorithm>
#include <cctype>

#include "kbopt/text.hpp"

namespace kbopt {

MissingPlaceholderData::MissingPlaceholderData(const std::string& placeholder)
    : Error("no data for prompt placeholder <" + placeholder + ">") {}

namespace {

// The code-format section of the original actor template is replaced by a
// summary of the plan language; everything else is kept as written.
const std::string kActor = R"TXT(You are an expert user of a knowledge base, and your task is to answer a set of queries. I will provide your with the schema of this knowledge base:
<knowledge_base_schema>

You have access to several APIs that are pre-implemented for interaction with the knowledge base:
<func_call_description>

Information of queries: Below are several query examples that you need to carefully read through:
"
<example_queries>
"

Task: Given an input query, you should write the actions as a plan to calculate a `node_score_dict` for <n_init_candidates> node IDs, which are input as a list. These node IDs, referred to as `candidates`, are a subset of node IDs from the knowledge base, and the nodes belong to the type(s) <candidate_types>. In `node_score_dict`, each key should be a node ID, and each value should be the corresponding node score. This score should indicate the likelihood of the node being the correct answer to the query.

Output format: Firstly, you should establish a connection between the given queries and the query patterns to the schema of the knowledge base. Secondly, generate an outline for the plan that will compute the scores for all the candidate nodes provided in the query examples. Finally, write the plan. A plan is a straight-line program in the following language:

  param NAME = NUMBER                 declare a parameter or weight with its default value
  let NAME = Tool(ARG, ...)           call one of the APIs above
  let NAME = weighted_sum([m1, m2, ...], [e1, e2, ...])
  let NAME = max([m1, ...])           also min([...]) and product([...]), entrywise
  let NAME = normalize(m)             rescale a score map onto [0, 1]
  let NAME = filter(m, >= e)          set scores failing the test to 0 (also > e)
  let NAME = scale(m, e)              multiply every score by e
  debug("label", NAME)                print an intermediate result
  return NAME                         the final node_score_dict

Arguments are string literals in double quotes, numbers, `query`, `candidates`, earlier variables, lists in [...], and fields of earlier results written as NAME["key"]. The expressions e are arithmetic (+ - * /) over numbers and params. Statements are separated by newlines or `;`, and comments start with `#`. Every score map is computed over `candidates`. Overall, your output should follow the structure:

```plan
# plan outline
param w1 = 0.5
let scores = ...
...
return node_score_dict
```

Hints:
- Observe the example queries carefully and consider the key attributes to extract.
- Use ```plan and ``` to wrap the complete plan, and do not use any other delimiters.
- You can use any of the pre-implemented APIs but should avoid modifying them.
- The plan should be complete without placeholders and dummy steps.
- Optimize the integrity of the plan, e.g., corner cases.
- Minimize computational expenses by early elimination of candidate nodes that don't meet relational requirement (if any).
- Avoid conducting unnecessary and redundant computations.
- Make use of `param` declarations to avoid hard-coding parameters and weights.
- Use the APIs that end with `ByLLM` wisely for more accurate searches.
- Use `debug` smartly to print out any informative intermediate results for debugging.

Your output:
)TXT";

const std::string kContrastor = R"TXT(<initial_prompt>

<previous_actions>

After executing the above actions on user queries, some queries have yielded good results, while others have not. Below are the queries along with their corresponding evaluation metrics:
Well-performing queries:
<positive_queries_and_metric>
Poorly-performing queries:
<negative_queries_and_metric>

Task:
(1) Firstly, identify and contrast the patterns of queries that have achieved good results with those that have not.
(2) Then, review the computational logic for any inconsistencies in the previous actions.
(3) Lastly, specify the modification that can lead to improved performance on the negative queries. You should focus on capturing the high-level pattern of the queries relevant to the knowledge base schema.
)TXT";

std::string joined(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

std::string fenced(const std::string& plan_text) {
  std::string body = plan_text;
  if (!body.empty() && body.back() != '\n') body += '\n';
  return "```plan\n" + body + "```";
}

std::string metric_lines(const std::vector<QueryMetric>& qs, const std::string& metric_name) {
  std::string out;
  for (const auto& q : qs) out += "- " + q.query + " (" + metric_name + ": " + text::format_fixed3(q.metric) + ")\n";
  out.pop_back();
  return out;
}

}  // namespace

const std::string& actor_template() { return kActor; }
const std::string& contrastor_template() { return kContrastor; }

std::string fill_template(const std::string& tmpl,
                          const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find('<', pos);
    if (open == std::string::npos) break;
    auto close = tmpl.find('>', open);
    if (close == std::string::npos) break;
    std::string name = tmpl.substr(open + 1, close - open - 1);
    bool is_name = !name.empty();
    for (char c : name)
      if (!(std::islower(static_cast<unsigned char>(c)) || c == '_')) is_name = false;
    out += tmpl.substr(pos, open - pos);
    if (!is_name) {
      out += '<';
      pos = open + 1;
      continue;
    }
    auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
    if (it == values.end() || it->second.empty()) throw MissingPlaceholderData(name);
    out += it->second;
    pos = close + 1;
  }
  out += tmpl.substr(pos);
  return out;
}

std::string render_schema(const KbSchema& schema) {
  std::string out = "Entity types: " + joined(schema.entity_types, ", ") + "\n";
  out += "Relation types: " + joined(schema.relation_types, ", ") + "\n";
  out += "Candidate types: " + joined(schema.candidate_types, ", ") + "\n";
  out += schema.description;
  return out;
}

std::string render_actor_prompt(const KbSchema& schema, const ToolRegistry& registry,
                                 const std::vector<std::string>& example_queries,
                                 std::size_t n_init_candidates,
                                 const std::vector<std::string>& candidate_types) {
  if (example_queries.empty()) throw MissingPlaceholderData("example_queries");
  if (n_init_candidates == 0) throw MissingPlaceholderData("n_init_candidates");
  return fill_template(kActor, {
      {"knowledge_base_schema", render_schema(schema)},
      {"func_call_description", registry.render_descriptions()},
      {"example_queries", joined(example_queries, "\n")},
      {"n_init_candidates", std::to_string(n_init_candidates)},
      {"candidate_types", joined(candidate_types, ", ")},
  });
}

std::string render_contrastor_prompt(const std::string& initial_prompt, const Plan& previous_plan,
                                     const std::vector<QueryMetric>& positives,
                                     const std::vector<QueryMetric>& negatives,
                                     const std::string& metric_name) {
  if (positives.empty()) throw MissingPlaceholderData("positive_queries_and_metric");
  if (negatives.empty()) throw MissingPlaceholderData("negative_queries_and_metric");
  // substituted text is never rescanned, so plans and queries may contain '<'
  return fill_template(kContrastor, {
      {"initial_prompt", initial_prompt},
      {"previous_actions", fenced(render_plan(previous_plan))},
      {"positive_queries_and_metric", metric_lines(positives, metric_name)},
      {"negative_queries_and_metric", metric_lines(negatives, metric_name)},
  });
}

std::string render_actor_followup(const std::string& initial_prompt,
                                  const std::vector<MemoryExcerpt>& memory,
                                  const std::string& previous_plan, const std::string& instruction) {
  static const std::string kTail = "Your output:\n";
  std::string out = initial_prompt;
  if (out.size() >= kTail.size() && out.compare(out.size() - kTail.size(), kTail.size(), kTail) == 0)
    out.resize(out.size() - kTail.size());
  if (!memory.empty()) {
    out += "Best plans so far, with their performance on a sampled batch of training queries:\n";
    for (std::size_t i = 0; i < memory.size(); ++i) {
      out += "\nPlan " + std::to_string(i + 1) + " (iteration " + std::to_string(memory[i].iteration) +
             ", performance " + text::format_fixed3(memory[i].performance) + "):\n";
      out += fenced(memory[i].plan_text) + "\n";
    }
  }
  out += "\nPrevious plan:\n" + fenced(previous_plan) + "\n";
  out += "\nInstructions for improving the previous plan:\n" + text::trim(instruction) + "\n";
  out += "\n" + kTail;
  return out;
}

std::string append_errors(const std::string& prompt, const std::vector<std::string>& errors) {
  static const std::string kTail = "Your output:\n";
  std::string out = prompt;
  bool tail = out.size() >= kTail.size() && out.compare(out.size() - kTail.size(), kTail.size(), kTail) == 0;
  if (tail) out.resize(out.size() - kTail.size());
  out += "\nErrors from your previous output:\n";
  for (const auto& e : errors) out += "- " + e + "\n";
  if (tail) out += "\n" + kTail;
  return out;
}

}  // namespace kbopt
