/* CSV harness for emitted artifacts: harness <input.csv> <output.csv>.
   Built with -DNEUROFLAP_MODEL_HEADER, -DNEUROFLAP_PREFIX and the size macros. */
#include <errno.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include NEUROFLAP_MODEL_HEADER

#define CAT2(a, b) a##b
#define CAT(a, b) CAT2(a, b)
#define API(name) CAT(NEUROFLAP_PREFIX, name)

static char line[1 << 16];

int main(int argc, char** argv) {
  float in[NEUROFLAP_INPUT_SIZE];
  float out[NEUROFLAP_OUTPUT_SIZE];
  uint32_t counts[NEUROFLAP_NUM_LAYERS];
  unsigned long lineno = 0;
  FILE* fin;
  FILE* fout;
  if (argc != 3) {
    fprintf(stderr, "usage: %s <input.csv> <output.csv>\n", argv[0]);
    return 2;
  }
  fin = fopen(argv[1], "r");
  if (!fin) {
    fprintf(stderr, "cannot open %s\n", argv[1]);
    return 2;
  }
  fout = fopen(argv[2], "w");
  if (!fout) {
    fprintf(stderr, "cannot open %s\n", argv[2]);
    return 2;
  }
  API(_init)();
  while (fgets(line, sizeof(line), fin)) {
    char* p = line;
    int i;
    ++lineno;
    if (line[0] == '\n' || line[0] == '\0') continue;
    for (i = 0; i < NEUROFLAP_INPUT_SIZE; ++i) {
      char* end;
      errno = 0;
      in[i] = strtof(p, &end);
      if (end == p || errno == ERANGE) {
        fprintf(stderr, "line %lu: bad value in column %d\n", lineno, i + 1);
        return 3;
      }
      p = end;
      if (i + 1 < NEUROFLAP_INPUT_SIZE) {
        if (*p != ',') {
          fprintf(stderr, "line %lu: expected %d columns\n", lineno, NEUROFLAP_INPUT_SIZE);
          return 3;
        }
        ++p;
      }
    }
    if (*p != '\n' && *p != '\0' && *p != '\r') {
      fprintf(stderr, "line %lu: trailing characters\n", lineno);
      return 3;
    }
    API(_step)(in, out);
    API(_spike_counts)(counts);
    for (i = 0; i < NEUROFLAP_OUTPUT_SIZE; ++i) fprintf(fout, "%s%.17g", i ? "," : "", (double)out[i]);
    for (i = 0; i < NEUROFLAP_NUM_LAYERS; ++i) fprintf(fout, ",%lu", (unsigned long)counts[i]);
    fputc('\n', fout);
  }
  fclose(fin);
  return fclose(fout) == 0 ? 0 : 4;
}
