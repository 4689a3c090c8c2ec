package org.joda.time.format;

public class PeriodFormatterBuilder {
    private final StringBuilder pattern = new StringBuilder();

    public static class Literal {
        public String text;
    }

    public PeriodFormatterBuilder appendDays() {
        pattern.append("%d");
        return this;
    }

    public PeriodFormatterBuilder appendHours() {
        pattern.append("%h");
        return this;
    }

    public PeriodFormatterBuilder appendSuffix(String suffix) {
        pattern.append(suffix);
        return this;
    }

    public PeriodFormatterBuilder appendSeparator(String separator) {
        pattern.append(separator);
        return this;
    }

    public PeriodFormatter toFormatter() {
        return new PeriodFormatter(pattern.toString()) {
            public String toString() {
                return "PeriodFormatter";
            }
        };
    }
}
